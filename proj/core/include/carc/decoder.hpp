#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "carc/palette.hpp"
#include "carc/rng.hpp"
#include "carc/tensor.hpp"

namespace carc {

enum class FusionMode { none, add, cross_attn, prefill };

std::string fusion_mode_name(FusionMode m);
FusionMode fusion_mode_from_string(const std::string& s);

// Fusion layers counted 1-based: three evenly spaced layers starting at 1,
// stride ceil(n/3), clipped to the layer count. 12 layers -> {1,5,9},
// 8 layers -> {1,4,7}.
std::vector<int> default_fusion_layers(int n_layers);

struct FusionSpec {
    FusionMode mode = FusionMode::none;
    std::vector<int> fusion_layers;  // 1-indexed, sorted; empty when mode=none
    float alpha = 1.0f;              // inference strength knob; training uses 1
    float train_dropout_p = 0.0f;    // all-or-nothing control dropout per sample
    bool alpha_pre_projection = false;  // scale C before the MLP instead of after

    void validate(int n_layers) const;
};

struct DecoderConfig {
    int n_layers = 8;
    int d_model = 256;
    int n_heads = 8;
    int mlp_ratio = 4;
    int vocab = 64;
    int n_classes = 3;
    int s_max = 256;
    float rope_base = 10000.0f;
    int d_e = 128;  // control-token dim accepted by the fusion projections

    void validate() const;
};

struct DecoderLayer {
    Tensor attn_norm_w, wqkv, wo, mlp_norm_w, w1, w2;
};

// Two-layer projection d_e -> d_model -> d_model with silu between. The final
// matrix and bias start at zero so a fused forward equals the unconditional
// one until training moves them.
struct FusionProj {
    Tensor w1, b1, w2, b2;
};

struct FusionXAttn {
    Tensor wq, wk, wv, wo;  // wo zero-init: the branch starts silent
};

// Llama-style causal decoder over image tokens with a class token at position
// 0. Position k predicts token k of the grid; in add mode the control token
// for the predicted position rides on the same row, so fusion is a row-wise
// add of the projected control block.
struct Decoder {
    DecoderConfig cfg;
    FusionMode built_mode = FusionMode::none;
    std::vector<int> built_fusion_layers;

    Tensor tok_embed;  // [vocab x d]
    Tensor cls_embed;  // [(n_classes+1) x d]; the extra row is the null class
    std::vector<DecoderLayer> layers;
    Tensor final_norm_w;
    Tensor lm_head;  // [d x vocab]
    std::map<int, FusionProj> fusion_projs;    // keyed by 1-based layer
    std::map<int, FusionXAttn> fusion_xattns;  // cross_attn mode only
    FusionProj prefill_proj;                   // prefill mode only

    static Decoder init(const DecoderConfig& cfg, const FusionSpec& spec, Rng& rng);

    // Projected control block for one fusion layer, alpha applied per the
    // spec's placement switch. Returns [L x d_model], tape-recorded.
    Tensor project_controls(const Tensor& controls, int layer_1idx, float alpha,
                            bool pre_projection) const;

    // Teacher-forced forward. Input row k is [class, q1..q_{n-1}][k]; output
    // logits row k scores grid token k. controls must be null iff mode=none.
    Tensor forward_train(const TokenGrid& tokens, int class_id, const Tensor* controls,
                         const FusionSpec& spec) const;

    // Prefill baseline: controls occupy L leading positions, loss positions
    // are the trailing n. Returns [n x vocab].
    Tensor forward_prefill_train(const TokenGrid& tokens, int class_id, const Tensor& controls,
                                 const FusionSpec& spec) const;

    void collect_params(std::vector<std::pair<std::string, Tensor>>& out) const;

    int null_class() const { return cfg.n_classes; }

  private:
    Tensor embed_sequence(const TokenGrid& tokens, int class_id) const;
    Tensor fuse(const Tensor& x, const Tensor& controls, int layer_1idx,
                const FusionSpec& spec) const;
    Tensor backbone(Tensor x, const Tensor* controls, const FusionSpec& spec, bool fuse_layers) const;
};

}  // namespace carc
