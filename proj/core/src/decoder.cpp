#include "carc/decoder.hpp"

#include <algorithm>

#include "carc/ops.hpp"

namespace carc {

std::string fusion_mode_name(FusionMode m) {
    switch (m) {
        case FusionMode::none: return "none";
        case FusionMode::add: return "add";
        case FusionMode::cross_attn: return "cross_attn";
        case FusionMode::prefill: return "prefill";
    }
    throw ConfigError("unknown fusion mode");
}

FusionMode fusion_mode_from_string(const std::string& s) {
    if (s == "none") return FusionMode::none;
    if (s == "add") return FusionMode::add;
    if (s == "cross_attn" || s == "xattn") return FusionMode::cross_attn;
    if (s == "prefill") return FusionMode::prefill;
    throw ConfigError("unknown fusion mode \"" + s + "\" (expected none|add|cross_attn|prefill)");
}

std::vector<int> default_fusion_layers(int n_layers) {
    const int stride = (n_layers + 2) / 3;
    std::vector<int> out;
    for (int i = 0; i < 3; ++i) {
        const int l = 1 + i * stride;
        if (l <= n_layers) out.push_back(l);
    }
    return out;
}

void FusionSpec::validate(int n_layers) const {
    if (mode == FusionMode::none && !fusion_layers.empty()) {
        throw ConfigError("fusion mode none must have no fusion layers");
    }
    if (!std::is_sorted(fusion_layers.begin(), fusion_layers.end()) ||
        std::adjacent_find(fusion_layers.begin(), fusion_layers.end()) != fusion_layers.end()) {
        throw ConfigError("fusion layers must be sorted and distinct");
    }
    for (int l : fusion_layers) {
        if (l < 1 || l > n_layers) {
            throw ConfigError("fusion layer " + std::to_string(l) + " outside [1," +
                              std::to_string(n_layers) + "]");
        }
    }
    if ((mode == FusionMode::add || mode == FusionMode::cross_attn) && fusion_layers.empty()) {
        throw ConfigError(fusion_mode_name(mode) + " mode requires at least one fusion layer");
    }
    if (alpha < 0.0f || alpha > 1.0f) throw ConfigError("alpha must be in [0,1]");
    if (train_dropout_p < 0.0f || train_dropout_p > 1.0f) {
        throw ConfigError("fusion dropout must be in [0,1]");
    }
}

void DecoderConfig::validate() const {
    if (n_layers < 1) throw ConfigError("decoder n_layers must be >= 1");
    if (d_model < 2 || n_heads < 1 || d_model % n_heads != 0) {
        throw ConfigError("d_model " + std::to_string(d_model) + " not divisible by " +
                          std::to_string(n_heads) + " heads");
    }
    if ((d_model / n_heads) % 2 != 0) throw ConfigError("head dim must be even for rotary pairs");
    if (mlp_ratio < 1) throw ConfigError("decoder mlp_ratio must be >= 1");
    if (vocab < 1) throw ConfigError("vocab must be >= 1");
    if (n_classes < 1) throw ConfigError("n_classes must be >= 1");
    if (s_max < 1) throw ConfigError("s_max must be >= 1");
    if (rope_base <= 0.0f) throw ConfigError("rope_base must be > 0");
    if (d_e < 1) throw ConfigError("d_e must be >= 1");
}

namespace {

FusionProj init_proj(int d_in, int d_out, Rng& r) {
    FusionProj p;
    p.w1 = Tensor::randn({d_in, d_out}, r, 0.02f);
    p.b1 = Tensor::zeros({d_out});
    p.w2 = Tensor::zeros({d_out, d_out});
    p.b2 = Tensor::zeros({d_out});
    return p;
}

}  // namespace

Decoder Decoder::init(const DecoderConfig& cfg, const FusionSpec& spec, Rng& rng) {
    cfg.validate();
    spec.validate(cfg.n_layers);
    Decoder d;
    d.cfg = cfg;
    d.built_mode = spec.mode;
    d.built_fusion_layers = spec.fusion_layers;
    Rng r = rng.fork("decoder-init");
    const float s = 0.02f;
    d.tok_embed = Tensor::randn({cfg.vocab, cfg.d_model}, r, s);
    d.cls_embed = Tensor::randn({cfg.n_classes + 1, cfg.d_model}, r, s);
    const int mlp = cfg.d_model * cfg.mlp_ratio;
    for (int i = 0; i < cfg.n_layers; ++i) {
        DecoderLayer l;
        l.attn_norm_w = Tensor::full({cfg.d_model}, 1.0f);
        l.wqkv = Tensor::randn({cfg.d_model, 3 * cfg.d_model}, r, s);
        l.wo = Tensor::zeros({cfg.d_model, cfg.d_model});
        l.mlp_norm_w = Tensor::full({cfg.d_model}, 1.0f);
        l.w1 = Tensor::randn({cfg.d_model, mlp}, r, s);
        l.w2 = Tensor::zeros({mlp, cfg.d_model});
        d.layers.push_back(std::move(l));
    }
    d.final_norm_w = Tensor::full({cfg.d_model}, 1.0f);
    d.lm_head = Tensor::randn({cfg.d_model, cfg.vocab}, r, s);
    if (spec.mode == FusionMode::add || spec.mode == FusionMode::cross_attn) {
        for (int l : spec.fusion_layers) {
            d.fusion_projs.emplace(l, init_proj(cfg.d_e, cfg.d_model, r));
            if (spec.mode == FusionMode::cross_attn) {
                FusionXAttn xa;
                xa.wq = Tensor::randn({cfg.d_model, cfg.d_model}, r, s);
                xa.wk = Tensor::randn({cfg.d_model, cfg.d_model}, r, s);
                xa.wv = Tensor::randn({cfg.d_model, cfg.d_model}, r, s);
                xa.wo = Tensor::zeros({cfg.d_model, cfg.d_model});
                d.fusion_xattns.emplace(l, std::move(xa));
            }
        }
    } else if (spec.mode == FusionMode::prefill) {
        d.prefill_proj = init_proj(cfg.d_e, cfg.d_model, r);
    }
    return d;
}

Tensor Decoder::project_controls(const Tensor& controls, int layer_1idx, float alpha,
                                 bool pre_projection) const {
    const FusionProj* fp;
    if (built_mode == FusionMode::prefill) {
        fp = &prefill_proj;
    } else {
        auto it = fusion_projs.find(layer_1idx);
        if (it == fusion_projs.end()) {
            throw ConfigError("layer " + std::to_string(layer_1idx) + " has no fusion projection");
        }
        fp = &it->second;
    }
    if (controls.dim(1) != cfg.d_e) {
        throw ShapeError("controls dim " + std::to_string(controls.dim(1)) + " != configured d_e " +
                         std::to_string(cfg.d_e));
    }
    Tensor in = pre_projection && alpha != 1.0f ? scale(controls, alpha) : controls;
    Tensor h = silu_op(add_bias(matmul(in, fp->w1), fp->b1));
    Tensor p = add_bias(matmul(h, fp->w2), fp->b2);
    if (!pre_projection && alpha != 1.0f) p = scale(p, alpha);
    return p;
}

Tensor Decoder::embed_sequence(const TokenGrid& tokens, int class_id) const {
    if (class_id < 0 || class_id > cfg.n_classes) {
        throw IndexError("class id " + std::to_string(class_id) + " outside [0," +
                         std::to_string(cfg.n_classes) + "]");
    }
    Tensor cls = embedding(cls_embed, {class_id});
    const auto n = static_cast<int>(tokens.tokens.size());
    if (n <= 1) return cls;
    std::vector<int> prev(tokens.tokens.begin(), tokens.tokens.end() - 1);
    return concat_rows(cls, embedding(tok_embed, prev));
}

Tensor Decoder::fuse(const Tensor& x, const Tensor& controls, int layer_1idx,
                     const FusionSpec& spec) const {
    // Post-projection alpha=0 must reproduce the unconditional forward
    // bitwise, so skip the branch entirely.
    if (spec.alpha == 0.0f && !spec.alpha_pre_projection) return x;
    if (spec.mode == FusionMode::add) {
        return add(x, project_controls(controls, layer_1idx, spec.alpha, spec.alpha_pre_projection));
    }
    // cross_attn: alpha rides on C (pre) or on the attention output (post).
    Tensor p = project_controls(controls, layer_1idx, spec.alpha_pre_projection ? spec.alpha : 1.0f,
                                spec.alpha_pre_projection);
    auto it = fusion_xattns.find(layer_1idx);
    if (it == fusion_xattns.end()) {
        throw ConfigError("layer " + std::to_string(layer_1idx) + " has no cross-attention weights");
    }
    const FusionXAttn& xa = it->second;
    Tensor att = cross_attention(matmul(x, xa.wq), matmul(p, xa.wk), matmul(p, xa.wv), cfg.n_heads);
    Tensor out = matmul(att, xa.wo);
    return spec.alpha_pre_projection ? add(x, out) : add_scaled(x, out, spec.alpha);
}

Tensor Decoder::backbone(Tensor x, const Tensor* controls, const FusionSpec& spec,
                         bool fuse_layers) const {
    size_t fi = 0;
    for (int li = 0; li < cfg.n_layers; ++li) {
        if (fuse_layers && controls != nullptr && fi < spec.fusion_layers.size() &&
            spec.fusion_layers[fi] == li + 1) {
            x = fuse(x, *controls, li + 1, spec);
            ++fi;
        }
        const DecoderLayer& l = layers[static_cast<size_t>(li)];
        Tensor att = self_attention(matmul(rmsnorm(x, l.attn_norm_w), l.wqkv), cfg.n_heads,
                                    /*causal=*/true, cfg.rope_base);
        x = add(x, matmul(att, l.wo));
        Tensor h = silu_op(matmul(rmsnorm(x, l.mlp_norm_w), l.w1));
        x = add(x, matmul(h, l.w2));
    }
    return rmsnorm(x, final_norm_w);
}

Tensor Decoder::forward_train(const TokenGrid& tokens, int class_id, const Tensor* controls,
                              const FusionSpec& spec) const {
    spec.validate(cfg.n_layers);
    const auto n = static_cast<int>(tokens.tokens.size());
    if (n < 1) throw ShapeError("forward_train: empty token grid");
    if (n > cfg.s_max) {
        throw OverflowError("sequence length " + std::to_string(n) + " exceeds s_max " +
                            std::to_string(cfg.s_max));
    }
    if (spec.mode == FusionMode::none) {
        if (controls != nullptr) throw ConfigError("controls supplied but fusion mode is none");
    } else {
        if (spec.mode == FusionMode::prefill) {
            throw ConfigError("prefill mode trains through forward_prefill_train");
        }
        if (spec.mode != built_mode) {
            throw ConfigError("fusion mode " + fusion_mode_name(spec.mode) +
                              " does not match built weights (" + fusion_mode_name(built_mode) + ")");
        }
        if (spec.fusion_layers != built_fusion_layers) {
            throw ConfigError("fusion layers do not match built weights");
        }
        if (controls == nullptr) {
            throw ConfigError(fusion_mode_name(spec.mode) + " mode requires controls");
        }
        if (controls->dim(0) != n) {
            throw ShapeError("control/token alignment: " + std::to_string(controls->dim(0)) +
                             " controls vs " + std::to_string(n) + " tokens");
        }
    }
    Tensor x = backbone(embed_sequence(tokens, class_id), controls, spec, /*fuse_layers=*/true);
    return matmul(x, lm_head);
}

Tensor Decoder::forward_prefill_train(const TokenGrid& tokens, int class_id, const Tensor& controls,
                                      const FusionSpec& spec) const {
    spec.validate(cfg.n_layers);
    if (built_mode != FusionMode::prefill || spec.mode != FusionMode::prefill) {
        throw ConfigError("forward_prefill_train requires prefill-mode weights");
    }
    const auto n = static_cast<int>(tokens.tokens.size());
    const int l = controls.dim(0);
    if (n < 1) throw ShapeError("forward_prefill_train: empty token grid");
    if (l + n > cfg.s_max) {
        throw OverflowError("prefilled sequence " + std::to_string(l) + "+" + std::to_string(n) +
                            " exceeds s_max " + std::to_string(cfg.s_max));
    }
    Tensor prefix = project_controls(controls, 0, spec.alpha, spec.alpha_pre_projection);
    Tensor x = concat_rows(prefix, embed_sequence(tokens, class_id));
    x = backbone(std::move(x), nullptr, spec, /*fuse_layers=*/false);
    return matmul(slice_rows(x, l, l + n), lm_head);
}

void Decoder::collect_params(std::vector<std::pair<std::string, Tensor>>& out) const {
    out.emplace_back("tok_embed", tok_embed);
    out.emplace_back("cls_embed", cls_embed);
    for (size_t i = 0; i < layers.size(); ++i) {
        const std::string p = "layer" + std::to_string(i) + ".";
        out.emplace_back(p + "attn_norm.w", layers[i].attn_norm_w);
        out.emplace_back(p + "attn.wqkv", layers[i].wqkv);
        out.emplace_back(p + "attn.wo", layers[i].wo);
        out.emplace_back(p + "mlp_norm.w", layers[i].mlp_norm_w);
        out.emplace_back(p + "mlp.w1", layers[i].w1);
        out.emplace_back(p + "mlp.w2", layers[i].w2);
    }
    out.emplace_back("final_norm.w", final_norm_w);
    out.emplace_back("lm_head.w", lm_head);
    for (const auto& [l, fp] : fusion_projs) {
        const std::string p = "fusion" + std::to_string(l) + ".proj.";
        out.emplace_back(p + "w1", fp.w1);
        out.emplace_back(p + "b1", fp.b1);
        out.emplace_back(p + "w2", fp.w2);
        out.emplace_back(p + "b2", fp.b2);
    }
    for (const auto& [l, xa] : fusion_xattns) {
        const std::string p = "fusion" + std::to_string(l) + ".xattn.";
        out.emplace_back(p + "wq", xa.wq);
        out.emplace_back(p + "wk", xa.wk);
        out.emplace_back(p + "wv", xa.wv);
        out.emplace_back(p + "wo", xa.wo);
    }
    if (built_mode == FusionMode::prefill) {
        out.emplace_back("prefill_proj.w1", prefill_proj.w1);
        out.emplace_back("prefill_proj.b1", prefill_proj.b1);
        out.emplace_back("prefill_proj.w2", prefill_proj.w2);
        out.emplace_back("prefill_proj.b2", prefill_proj.b2);
    }
}

}  // namespace carc
