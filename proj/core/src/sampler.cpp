#include "carc/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>

#include "carc/kernels.hpp"
#include "carc/ops.hpp"

namespace carc {

void SamplingParams::validate(int vocab) const {
    if (temperature < 0.0f) throw ConfigError("temperature must be >= 0");
    if (top_k < 1 || top_k > vocab) {
        throw ConfigError("top_k " + std::to_string(top_k) + " outside [1," + std::to_string(vocab) +
                          "]");
    }
    if (alpha < 0.0f || alpha > 1.0f) throw ConfigError("alpha must be in [0,1]");
    if (cfg_scale <= 0.0f) throw ConfigError("cfg_scale must be > 0");
}

KVCache::KVCache(int n_layers_, int d_model_, int capacity_)
    : n_layers(n_layers_), d_model(d_model_), capacity(capacity_) {
    k.assign(static_cast<size_t>(n_layers), std::vector<float>(static_cast<size_t>(capacity) * d_model));
    v = k;
}

namespace {

// x[1 x d_in] through a FusionProj, plain buffers.
std::vector<float> run_proj(const FusionProj& fp, const float* c, int l, int d_in, int d_out) {
    std::vector<float> h(static_cast<size_t>(d_out));
    std::vector<float> out(static_cast<size_t>(l) * d_out);
    for (int i = 0; i < l; ++i) {
        kernels::matvec(d_in, d_out, c + static_cast<int64_t>(i) * d_in, fp.w1.data(), h.data());
        for (int j = 0; j < d_out; ++j) h[static_cast<size_t>(j)] = kernels::silu(h[static_cast<size_t>(j)] + fp.b1.data()[j]);
        float* oi = out.data() + static_cast<int64_t>(i) * d_out;
        kernels::matvec(d_out, d_out, h.data(), fp.w2.data(), oi);
        for (int j = 0; j < d_out; ++j) oi[j] += fp.b2.data()[j];
    }
    return out;
}

std::vector<float> mat_by(const std::vector<float>& x, const Tensor& w, int rows) {
    const int d_in = w.dim(0), d_out = w.dim(1);
    std::vector<float> out(static_cast<size_t>(rows) * d_out);
    kernels::gemm_nn(rows, d_in, d_out, x.data(), w.data(), out.data());
    return out;
}

// Bidirectional single-query attention of x over fixed [l x d] k/v blocks.
void xattn_query(const float* q, const std::vector<float>& ks, const std::vector<float>& vs, int l,
                 int d, int n_heads, float* out) {
    const int dh = d / n_heads;
    const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
    std::vector<float> scores(static_cast<size_t>(l));
    for (int h = 0; h < n_heads; ++h) {
        const float* qh = q + h * dh;
        for (int j = 0; j < l; ++j) {
            const float* kj = ks.data() + static_cast<int64_t>(j) * d + h * dh;
            double s = 0.0;
            for (int t = 0; t < dh; ++t) s += static_cast<double>(qh[t]) * kj[t];
            scores[static_cast<size_t>(j)] = static_cast<float>(s * scl);
        }
        kernels::softmax_row(scores.data(), l);
        float* oh = out + h * dh;
        for (int t = 0; t < dh; ++t) {
            double s = 0.0;
            for (int j = 0; j < l; ++j) {
                s += static_cast<double>(scores[static_cast<size_t>(j)]) *
                     vs[static_cast<size_t>(j) * d + h * dh + t];
            }
            oh[t] = static_cast<float>(s);
        }
    }
}

}  // namespace

ControlPlan plan_controls(const Decoder& dec, const Tensor& controls, const FusionSpec& spec) {
    spec.validate(dec.cfg.n_layers);
    const int l = controls.dim(0), d = dec.cfg.d_model;
    if (controls.dim(1) != dec.cfg.d_e) {
        throw ShapeError("controls dim " + std::to_string(controls.dim(1)) + " != configured d_e " +
                         std::to_string(dec.cfg.d_e));
    }
    ControlPlan plan;
    plan.mode = spec.mode;
    plan.alpha = spec.alpha;
    plan.alpha_pre_projection = spec.alpha_pre_projection;
    plan.length = l;
    if (spec.mode == FusionMode::none) return plan;
    if (spec.mode != dec.built_mode) {
        throw ConfigError("fusion mode " + fusion_mode_name(spec.mode) +
                          " does not match built weights (" + fusion_mode_name(dec.built_mode) + ")");
    }

    std::vector<float> c_in(controls.data(), controls.data() + controls.numel());
    if (plan.alpha_pre_projection && plan.alpha != 1.0f) {
        for (float& x : c_in) x *= plan.alpha;
    }

    if (spec.mode == FusionMode::prefill) {
        plan.prefix = run_proj(dec.prefill_proj, c_in.data(), l, dec.cfg.d_e, d);
        if (!plan.alpha_pre_projection && plan.alpha != 1.0f) {
            for (float& x : plan.prefix) x *= plan.alpha;
        }
        return plan;
    }
    // Skip the projections entirely at alpha 0 post-projection: the plan then
    // reproduces the unconditional path bitwise.
    if (plan.alpha == 0.0f && !plan.alpha_pre_projection) return plan;
    for (int fl : spec.fusion_layers) {
        auto it = dec.fusion_projs.find(fl);
        if (it == dec.fusion_projs.end()) {
            throw ConfigError("layer " + std::to_string(fl) + " has no fusion projection");
        }
        std::vector<float> p = run_proj(it->second, c_in.data(), l, dec.cfg.d_e, d);
        if (spec.mode == FusionMode::add) {
            if (!plan.alpha_pre_projection && plan.alpha != 1.0f) {
                for (float& x : p) x *= plan.alpha;
            }
            plan.fused_rows.emplace(fl, std::move(p));
        } else {
            const FusionXAttn& xa = dec.fusion_xattns.at(fl);
            plan.xattn_k.emplace(fl, mat_by(p, xa.wk, l));
            plan.xattn_v.emplace(fl, mat_by(p, xa.wv, l));
        }
    }
    return plan;
}

void decode_step(const Decoder& dec, const ControlPlan* plan, KVCache& cache, const float* x_in,
                 float* logits) {
    const DecoderConfig& cfg = dec.cfg;
    const int d = cfg.d_model, heads = cfg.n_heads, dh = d / heads;
    if (cache.t >= cache.capacity) {
        throw OverflowError("kv cache full at " + std::to_string(cache.capacity) + " positions");
    }
    const int pos = cache.t;

    std::vector<float> x(x_in, x_in + d);
    std::vector<float> h(static_cast<size_t>(d));
    std::vector<float> qkv(static_cast<size_t>(3) * d);
    std::vector<float> att(static_cast<size_t>(d));
    std::vector<float> scores(static_cast<size_t>(pos) + 1);
    const int mlp = d * cfg.mlp_ratio;
    std::vector<float> hm(static_cast<size_t>(mlp));

    const bool fuse_add = plan != nullptr && plan->mode == FusionMode::add && !plan->fused_rows.empty();
    const bool fuse_x = plan != nullptr && plan->mode == FusionMode::cross_attn && !plan->xattn_k.empty();

    for (int li = 0; li < cfg.n_layers; ++li) {
        const int l1 = li + 1;
        if (fuse_add) {
            auto it = plan->fused_rows.find(l1);
            if (it != plan->fused_rows.end()) {
                if (pos >= plan->length) {
                    throw OverflowError("fusion rows exhausted at position " + std::to_string(pos));
                }
                const float* row = it->second.data() + static_cast<int64_t>(pos) * d;
                for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] += row[j];
            }
        } else if (fuse_x) {
            auto it = plan->xattn_k.find(l1);
            if (it != plan->xattn_k.end()) {
                const FusionXAttn& xa = dec.fusion_xattns.at(l1);
                std::vector<float> q(static_cast<size_t>(d)), ao(static_cast<size_t>(d)),
                    proj(static_cast<size_t>(d));
                kernels::matvec(d, d, x.data(), xa.wq.data(), q.data());
                xattn_query(q.data(), it->second, plan->xattn_v.at(l1), plan->length, d, heads,
                            ao.data());
                kernels::matvec(d, d, ao.data(), xa.wo.data(), proj.data());
                const float a = plan->alpha_pre_projection ? 1.0f : plan->alpha;
                for (int j = 0; j < d; ++j) x[static_cast<size_t>(j)] += a * proj[static_cast<size_t>(j)];
            }
        }

        const DecoderLayer& lw = dec.layers[static_cast<size_t>(li)];
        kernels::rmsnorm_row(x.data(), lw.attn_norm_w.data(), h.data(), d, 1e-5f);
        kernels::matvec(d, 3 * d, h.data(), lw.wqkv.data(), qkv.data());
        float* q = qkv.data();
        float* k = qkv.data() + d;
        const float* vv = qkv.data() + 2 * d;
        kernels::rope_row(q, d, heads, pos, cfg.rope_base);
        kernels::rope_row(k, d, heads, pos, cfg.rope_base);
        std::memcpy(cache.k[static_cast<size_t>(li)].data() + static_cast<int64_t>(pos) * d, k,
                    sizeof(float) * static_cast<size_t>(d));
        std::memcpy(cache.v[static_cast<size_t>(li)].data() + static_cast<int64_t>(pos) * d, vv,
                    sizeof(float) * static_cast<size_t>(d));

        const float* kc = cache.k[static_cast<size_t>(li)].data();
        const float* vc = cache.v[static_cast<size_t>(li)].data();
        const double scl = 1.0 / std::sqrt(static_cast<double>(dh));
        for (int hd = 0; hd < heads; ++hd) {
            const float* qh = q + hd * dh;
            for (int j = 0; j <= pos; ++j) {
                const float* kj = kc + static_cast<int64_t>(j) * d + hd * dh;
                double s = 0.0;
                for (int t = 0; t < dh; ++t) s += static_cast<double>(qh[t]) * kj[t];
                scores[static_cast<size_t>(j)] = static_cast<float>(s * scl);
            }
            kernels::softmax_row(scores.data(), pos + 1);
            float* ah = att.data() + hd * dh;
            for (int t = 0; t < dh; ++t) {
                double s = 0.0;
                for (int j = 0; j <= pos; ++j) {
                    s += static_cast<double>(scores[static_cast<size_t>(j)]) *
                         vc[static_cast<int64_t>(j) * d + hd * dh + t];
                }
                ah[t] = static_cast<float>(s);
            }
        }
        kernels::matvec(d, d, att.data(), lw.wo.data(), x.data(), /*acc=*/true);

        kernels::rmsnorm_row(x.data(), lw.mlp_norm_w.data(), h.data(), d, 1e-5f);
        kernels::matvec(d, mlp, h.data(), lw.w1.data(), hm.data());
        for (int j = 0; j < mlp; ++j) hm[static_cast<size_t>(j)] = kernels::silu(hm[static_cast<size_t>(j)]);
        kernels::matvec(mlp, d, hm.data(), lw.w2.data(), x.data(), /*acc=*/true);
    }
    ++cache.t;
    if (logits != nullptr) {
        kernels::rmsnorm_row(x.data(), dec.final_norm_w.data(), h.data(), d, 1e-5f);
        kernels::matvec(d, cfg.vocab, h.data(), dec.lm_head.data(), logits);
    }
}

int sample_logits(const float* logits, int vocab, const SamplingParams& params, Rng& rng) {
    if (params.temperature == 0.0f) {
        int best = 0;
        for (int i = 1; i < vocab; ++i) {
            if (logits[i] > logits[best]) best = i;
        }
        return best;
    }
    std::vector<int> idx(static_cast<size_t>(vocab));
    std::iota(idx.begin(), idx.end(), 0);
    const int k = std::min(params.top_k, vocab);
    // Full stable ordering keeps tie handling reproducible across platforms.
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) { return logits[a] > logits[b]; });
    std::vector<float> probs(static_cast<size_t>(k));
    for (int i = 0; i < k; ++i) probs[static_cast<size_t>(i)] = logits[idx[static_cast<size_t>(i)]] / params.temperature;
    kernels::softmax_row(probs.data(), k);
    const double u = rng.next_double();
    double acc = 0.0;
    for (int i = 0; i < k; ++i) {
        acc += probs[static_cast<size_t>(i)];
        if (u < acc) return idx[static_cast<size_t>(i)];
    }
    return idx[static_cast<size_t>(k - 1)];
}

namespace {

void embed_row(const Tensor& table, int row, float* out, int d) {
    std::memcpy(out, table.data() + static_cast<int64_t>(row) * d, sizeof(float) * static_cast<size_t>(d));
}

}  // namespace

TokenGrid generate(const Decoder& dec, int class_id, const ControlTokens& controls,
                   const FusionSpec& spec, const SamplingParams& params,
                   std::vector<std::vector<float>>* logits_trace) {
    const DecoderConfig& cfg = dec.cfg;
    params.validate(cfg.vocab);
    if (spec.mode == FusionMode::none) {
        throw ConfigError("generate requires a fusion mode (use alpha=0 for unconditional output)");
    }
    if (class_id < 0 || class_id >= cfg.n_classes) {
        throw IndexError("class id " + std::to_string(class_id) + " outside [0," +
                         std::to_string(cfg.n_classes) + ")");
    }
    const int l = controls.length();
    if (l < 1) throw ShapeError("empty control sequence");
    if (l > cfg.s_max) {
        throw OverflowError("control length " + std::to_string(l) + " exceeds s_max " +
                            std::to_string(cfg.s_max));
    }
    const bool prefill = spec.mode == FusionMode::prefill;
    const int cache_need = prefill ? 2 * l : l;
    if (cache_need > cfg.s_max) {
        throw OverflowError("prefill needs " + std::to_string(cache_need) +
                            " cache positions, s_max is " + std::to_string(cfg.s_max));
    }

    FusionSpec run_spec = spec;
    run_spec.alpha = params.alpha;
    ControlPlan plan = plan_controls(dec, controls.data, run_spec);

    const bool use_cfg = params.cfg_scale != 1.0f;
    const int d = cfg.d_model;
    Rng rng = Rng(params.seed).fork("sample");

    KVCache cache(cfg.n_layers, d, cache_need);
    KVCache cache_null = use_cfg ? KVCache(cfg.n_layers, d, cache_need) : KVCache(1, 1, 1);

    std::vector<float> x(static_cast<size_t>(d));
    std::vector<float> logits(static_cast<size_t>(cfg.vocab));
    std::vector<float> logits_null(static_cast<size_t>(cfg.vocab));

    if (prefill) {
        for (int i = 0; i < l; ++i) {
            const float* row = plan.prefix.data() + static_cast<int64_t>(i) * d;
            decode_step(dec, nullptr, cache, row, nullptr);
            if (use_cfg) decode_step(dec, nullptr, cache_null, row, nullptr);
        }
    }

    TokenGrid out;
    out.rows = controls.source_rows;
    out.cols = controls.source_cols;
    out.tokens.reserve(static_cast<size_t>(l));
    const ControlPlan* step_plan = prefill ? nullptr : &plan;
    for (int t = 0; t < l; ++t) {
        if (t == 0) {
            embed_row(dec.cls_embed, class_id, x.data(), d);
        } else {
            embed_row(dec.tok_embed, out.tokens.back(), x.data(), d);
        }
        decode_step(dec, step_plan, cache, x.data(), logits.data());
        if (use_cfg) {
            if (t == 0) embed_row(dec.cls_embed, dec.null_class(), x.data(), d);
            decode_step(dec, step_plan, cache_null, x.data(), logits_null.data());
            for (int j = 0; j < cfg.vocab; ++j) {
                logits[static_cast<size_t>(j)] =
                    logits_null[static_cast<size_t>(j)] +
                    params.cfg_scale * (logits[static_cast<size_t>(j)] - logits_null[static_cast<size_t>(j)]);
            }
        }
        if (logits_trace != nullptr) logits_trace->push_back(logits);
        out.tokens.push_back(sample_logits(logits.data(), cfg.vocab, params, rng));
    }
    return out;
}

TokenGrid generate_unconditional(const Decoder& dec, const Encoder& enc, int class_id, int rows,
                                 int cols, const FusionSpec& spec, const SamplingParams& params,
                                 std::vector<std::vector<float>>* logits_trace) {
    if (rows < 1 || cols < 1) throw ShapeError("target grid must be at least 1x1");
    const ControlImage map = resolution_map(rows * kPatch, cols * kPatch);
    return generate(dec, class_id, enc.encode(map), spec, params, logits_trace);
}

}  // namespace carc
