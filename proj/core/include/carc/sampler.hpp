#pragma once

#include <map>
#include <vector>

#include "carc/control.hpp"
#include "carc/decoder.hpp"
#include "carc/palette.hpp"
#include "carc/rng.hpp"

namespace carc {

struct SamplingParams {
    float temperature = 1.0f;  // 0 selects greedy argmax
    int top_k = 64;
    uint64_t seed = 0;
    float alpha = 1.0f;
    float cfg_scale = 1.0f;  // 1 = classifier-free guidance off

    void validate(int vocab) const;
};

// Per-layer key/value rows for one generation stream.
struct KVCache {
    int n_layers = 0;
    int d_model = 0;
    int capacity = 0;
    int t = 0;  // positions filled, shared by all layers
    std::vector<std::vector<float>> k, v;

    KVCache(int n_layers, int d_model, int capacity);
    void reset() { t = 0; }
};

// Control tensors pre-projected for the decode loop, so each step only adds
// rows (add mode) or attends over fixed k/v blocks (cross_attn mode).
struct ControlPlan {
    FusionMode mode = FusionMode::none;
    float alpha = 1.0f;
    bool alpha_pre_projection = false;
    int length = 0;
    std::map<int, std::vector<float>> fused_rows;  // add: ready-to-add [L x d]
    std::map<int, std::vector<float>> xattn_k;     // cross_attn: P*wk
    std::map<int, std::vector<float>> xattn_v;     //             P*wv
    std::vector<float> prefix;                     // prefill: projected [L x d]
};

ControlPlan plan_controls(const Decoder& dec, const Tensor& controls, const FusionSpec& spec);

// Advances one position: fuses controls into x (by the plan), runs every
// layer against the cache, appends the new k/v rows. Writes vocab logits
// when `logits` is non-null (prefill prefix positions skip the head).
void decode_step(const Decoder& dec, const ControlPlan* plan, KVCache& cache, const float* x_in,
                 float* logits);

// Picks the next token from raw logits: greedy at temperature 0, otherwise
// top-k temperature sampling. Deterministic given rng state.
int sample_logits(const float* logits, int vocab, const SamplingParams& params, Rng& rng);

// Emits exactly controls.length() tokens by incremental decoding; the output
// grid mirrors the control grid shape. cfg_scale != 1 runs a second
// null-class stream and extrapolates the logits.
TokenGrid generate(const Decoder& dec, int class_id, const ControlTokens& controls,
                   const FusionSpec& spec, const SamplingParams& params,
                   std::vector<std::vector<float>>* logits_trace = nullptr);

// Resolution-map-driven generation: the map fixes the grid shape; alpha
// governs how much the map steers content (0 = class-only).
TokenGrid generate_unconditional(const Decoder& dec, const Encoder& enc, int class_id, int rows,
                                 int cols, const FusionSpec& spec, const SamplingParams& params,
                                 std::vector<std::vector<float>>* logits_trace = nullptr);

}  // namespace carc
