#include "carc/costs.hpp"

#include <algorithm>
#include <chrono>

#include "carc/error.hpp"
#include "carc/model.hpp"
#include "carc/trainer.hpp"

namespace carc {

FlopsBreakdown flops_estimate(const DecoderConfig& cfg, const FusionSpec& spec, int64_t L,
                              int64_t n) {
    if (L < 0 || n < 1) throw ConfigError("flops_estimate needs L >= 0 and n >= 1");
    double d = cfg.d_model, de = cfg.d_e, layers = cfg.n_layers, r = cfg.mlp_ratio;
    double k = cfg.vocab, heads = cfg.n_heads, hd = d / cfg.n_heads;
    double s = spec.mode == FusionMode::prefill ? static_cast<double>(L + n)
                                                : static_cast<double>(n);
    double nf = static_cast<double>(spec.fusion_layers.size());
    double proj = 2.0 * L * (de * d + d * d);  // two-layer control MLP

    FlopsBreakdown f;
    f.attn_score = 2.0 * layers * heads * s * s * hd;
    f.attn_value = 2.0 * layers * heads * s * s * hd;
    f.linear = layers * (6.0 + 2.0 + 4.0 * r) * s * d * d + 2.0 * n * d * k;
    switch (spec.mode) {
        case FusionMode::none: break;
        case FusionMode::add: f.fusion = nf * proj; break;
        case FusionMode::cross_attn:
            f.fusion = nf * (proj + 2.0 * L * d * d * 2  // wk, wv
                             + 2.0 * s * d * d * 2       // wq, wo
                             + 2.0 * heads * s * L * hd * 2);
            break;
        case FusionMode::prefill: f.fusion = proj; break;
    }
    return f;
}

int64_t footprint_bytes(int64_t n_params, const DecoderConfig& cfg, FusionMode mode, int64_t L,
                        int64_t n, int batch) {
    if (n_params < 0 || L < 0 || n < 1 || batch < 1)
        throw ConfigError("footprint_bytes arguments out of range");
    int64_t s = mode == FusionMode::prefill ? L + n : n;
    int64_t d = cfg.d_model, r = cfg.mlp_ratio;
    // per layer: norms, qkv + saved rotated q/k/v, context, out, residuals,
    // both mlp halves; plus attention probabilities and the logit rows
    int64_t act = cfg.n_layers * ((13 + 2 * r) * d * s + cfg.n_heads * s * s) +
                  2 * n * cfg.vocab;
    return 16 * n_params + 4 * batch * act;
}

LatencyReport measure_train_step(const RunConfig& cfg, int rows, int cols, int trials,
                                 uint64_t seed) {
    if (trials < 1) throw ConfigError("measure_train_step needs at least one trial");
    if (rows < 1 || cols < 1) throw ConfigError("measure_train_step needs a non-empty grid");
    Model model = Model::init(cfg, seed);
    std::vector<Tensor> trainable = set_trainable(model, TrainRegime::full);
    AdamW opt(trainable, {cfg.train.lr, 0.9f, 0.95f, 1e-8f, cfg.train.weight_decay,
                          cfg.train.warmup});

    Rng rng = Rng(seed).fork("bench-data");
    int h = rows * kPatch, w = cols * kPatch;
    std::vector<TrainItem> batch;
    for (int b = 0; b < cfg.train.batch; ++b) {
        TrainItem item;
        item.tokens.rows = rows;
        item.tokens.cols = cols;
        for (int i = 0; i < rows * cols; ++i)
            item.tokens.tokens.push_back(static_cast<int>(rng.next_below(cfg.model.vocab)));
        item.class_id = static_cast<int>(rng.next_below(cfg.model.n_classes));
        Raster raster(h, w, 1);
        for (auto& px : raster.pix) {
            switch (cfg.control) {
                case ControlKind::edge: px = rng.next_bernoulli(0.2) ? 255 : 0; break;
                case ControlKind::segmentation: px = static_cast<uint8_t>(rng.next_below(4)); break;
                default: px = static_cast<uint8_t>(rng.next_below(256)); break;
            }
        }
        item.control.kind = cfg.control;
        item.control.raster = std::move(raster);
        item.control.maxval = cfg.control == ControlKind::segmentation ? 3 : 255;
        batch.push_back(std::move(item));
    }

    Rng step_rng = Rng(seed).fork("bench-step");
    train_step(model, batch, 0.0f, opt, step_rng);  // warmup

    LatencyReport report;
    for (int t = 0; t < trials; ++t) {
        auto t0 = std::chrono::steady_clock::now();
        train_step(model, batch, 0.0f, opt, step_rng);
        auto t1 = std::chrono::steady_clock::now();
        report.trial_ms.push_back(std::chrono::duration<double, std::milli>(t1 - t0).count());
    }
    std::vector<double> sorted = report.trial_ms;
    std::sort(sorted.begin(), sorted.end());
    size_t mid = sorted.size() / 2;
    report.median_ms =
        sorted.size() % 2 ? sorted[mid] : 0.5 * (sorted[mid - 1] + sorted[mid]);
    return report;
}

}  // namespace carc
