#include "carc/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <ostream>
#include <sstream>

#include "carc/error.hpp"
#include "carc/ops.hpp"

namespace carc {

ControlImage control_from_sample(const Sample& s, ControlKind kind) {
    switch (kind) {
        case ControlKind::edge: return {ControlKind::edge, s.edge, 255};
        case ControlKind::segmentation: return {ControlKind::segmentation, s.seg, kMaxShapes};
        case ControlKind::depth: return {ControlKind::depth, s.depth, 255};
        case ControlKind::resolution_map: break;
    }
    throw ConfigError("resolution maps are synthesized, not read from samples");
}

TrainItem make_train_item(const Sample& s, ControlKind kind, const Palette& pal) {
    TrainItem item;
    item.tokens = encode_image(s.image, pal);
    item.class_id = s.class_id;
    item.control = control_from_sample(s, kind);
    return item;
}

static int64_t positions_needed(FusionMode mode, int64_t tokens) {
    return mode == FusionMode::prefill ? 2 * tokens : tokens;
}

std::pair<int, int> sample_resolution(const TrainConfig& cfg, FusionMode mode, int s_max,
                                      Rng& rng) {
    std::vector<std::pair<int, int>> fits;
    for (auto [h, w] : cfg.resolutions) {
        int64_t tokens = static_cast<int64_t>(h / kPatch) * (w / kPatch);
        if (tokens <= cfg.t_max && positions_needed(mode, tokens) <= s_max)
            fits.push_back({h, w});
    }
    if (fits.empty())
        throw ConfigError("no configured resolution fits t_max=" + std::to_string(cfg.t_max) +
                          " and s_max=" + std::to_string(s_max));
    return fits[static_cast<size_t>(rng.next_below(fits.size()))];
}

namespace {

Tensor item_loss(const Model& m, const TrainItem& item, bool drop) {
    static const FusionSpec kPlain{};  // mode none
    if (drop || m.fusion.mode == FusionMode::none) {
        Tensor logits = m.dec.forward_train(item.tokens, item.class_id, nullptr, kPlain);
        return cross_entropy(logits, item.tokens.tokens);
    }
    Tensor controls = m.enc.forward(item.control);
    if (m.fusion.mode == FusionMode::prefill) {
        Tensor logits =
            m.dec.forward_prefill_train(item.tokens, item.class_id, controls, m.fusion);
        return cross_entropy(logits, item.tokens.tokens);
    }
    Tensor logits = m.dec.forward_train(item.tokens, item.class_id, &controls, m.fusion);
    return cross_entropy(logits, item.tokens.tokens);
}

}  // namespace

StepStats train_step(Model& m, const std::vector<TrainItem>& batch, float dropout_p, AdamW& opt,
                     Rng& rng) {
    if (batch.empty()) throw ConfigError("train_step needs a non-empty batch");
    StepStats stats;
    Tensor total;
    for (const auto& item : batch) {
        bool drop = rng.next_bernoulli(dropout_p);
        stats.dropped += drop;
        Tensor l = item_loss(m, item, drop);
        total = total.defined() ? add(total, l) : l;
    }
    Tensor loss = scale(total, 1.0f / static_cast<float>(batch.size()));
    stats.loss = loss.item();
    stats.lr = opt.current_lr();
    opt.zero_grad();
    loss.backward();
    opt.step();
    return stats;
}

double heldout_ce(const Model& m, const std::vector<TrainItem>& items) {
    if (items.empty()) throw ConfigError("heldout_ce needs at least one item");
    double total = 0.0;
    for (const auto& item : items) total += item_loss(m, item, false).item();
    return total / static_cast<double>(items.size());
}

namespace {

std::string section_lines(const std::string& text, const char* prefixes[], int n) {
    std::istringstream in(text);
    std::string line, out;
    while (std::getline(in, line))
        for (int i = 0; i < n; ++i)
            if (line.rfind(prefixes[i], 0) == 0) {
                out += line + "\n";
                break;
            }
    return out;
}

// architecture + data sections must agree between a resume config and the
// checkpoint it resumes from; schedule keys (train.*) may differ
void check_resume_compat(const RunConfig& cfg, const RunConfig& ckpt_cfg) {
    static const char* prefixes[] = {"model.", "encoder.", "data."};
    std::string a = section_lines(cfg.to_text(), prefixes, 3);
    std::string b = section_lines(ckpt_cfg.to_text(), prefixes, 3);
    if (a != b)
        throw ConfigError("resume config does not match the checkpoint architecture:\n--- run\n" +
                          a + "--- checkpoint\n" + b);
}

}  // namespace

Model run_training(const RunConfig& cfg, const std::vector<Sample>& data,
                   const std::string& ckpt_out, std::ostream* log,
                   const std::string& resume_from) {
    cfg.validate();
    const TrainConfig& tc = cfg.train;
    if (data.empty()) throw ConfigError("training needs at least one sample");

    Model model;
    AdamWConfig ocfg{tc.lr, 0.9f, 0.95f, 1e-8f, tc.weight_decay, tc.warmup};
    Rng loop = Rng(tc.seed).fork("train-loop");
    int64_t start_step = 0;

    if (resume_from.empty()) {
        model = Model::init(cfg, tc.seed);
    } else {
        Checkpoint ckpt = load_checkpoint(resume_from);
        RunConfig ckpt_cfg;
        model = model_from_checkpoint(ckpt, ckpt_cfg);
        check_resume_compat(cfg, ckpt_cfg);
        model.fusion = cfg.fusion;
        loop.restore(ckpt.rng.seed, ckpt.rng.stream, ckpt.rng.counter);
        start_step = ckpt.optim_step;
    }

    std::vector<Tensor> trainable = set_trainable(model, tc.regime);
    AdamW opt(trainable, ocfg);
    std::vector<std::string> trainable_names;
    for (const auto& [name, t] : model.named_params())
        if (tc.regime == TrainRegime::full || is_control_param(name))
            trainable_names.push_back(name);
    if (!resume_from.empty()) {
        Checkpoint ckpt = load_checkpoint(resume_from);
        load_optim_state(ckpt, trainable_names, opt);
    }

    // heldout tail for cadence metrics, the rest bucketed by resolution
    size_t heldout_n = std::min<size_t>(tc.heldout, data.size() > 1 ? data.size() - 1 : 0);
    size_t train_n = data.size() - heldout_n;
    const Palette pal = default_palette();

    std::map<std::pair<int, int>, std::vector<TrainItem>> buckets;
    for (size_t i = 0; i < train_n; ++i) {
        const Sample& s = data[i];
        buckets[{s.image.h, s.image.w}].push_back(make_train_item(s, cfg.control, pal));
    }
    // every resolution the loop can draw must have data behind it
    for (auto [h, w] : tc.resolutions) {
        int64_t tokens = static_cast<int64_t>(h / kPatch) * (w / kPatch);
        bool drawable = tokens <= tc.t_max &&
                        positions_needed(model.fusion.mode, tokens) <= cfg.model.s_max;
        if (drawable && buckets.find({h, w}) == buckets.end())
            throw ConfigError("no training samples at " + std::to_string(h) + "x" +
                              std::to_string(w));
    }

    std::vector<TrainItem> heldout_items;
    for (size_t i = train_n; i < data.size(); ++i) {
        const Sample& s = data[i];
        int64_t tokens = static_cast<int64_t>(s.image.h / kPatch) * (s.image.w / kPatch);
        if (tokens <= tc.t_max &&
            positions_needed(model.fusion.mode, tokens) <= cfg.model.s_max)
            heldout_items.push_back(make_train_item(s, cfg.control, pal));
    }

    RngState rng_state{loop.seed(), loop.stream(), loop.counter()};
    auto write_ckpt = [&] {
        rng_state = {loop.seed(), loop.stream(), loop.counter()};
        save_checkpoint(ckpt_out, snapshot_model(model, cfg, rng_state, &opt));
    };

    if (start_step >= tc.steps) {
        write_ckpt();
        return model;
    }

    std::vector<TrainItem> batch(tc.batch);
    for (int64_t step = start_step; step < tc.steps; ++step) {
        auto res = sample_resolution(tc, model.fusion.mode, cfg.model.s_max, loop);
        const auto& bucket = buckets.at(res);
        for (int b = 0; b < tc.batch; ++b)
            batch[b] = bucket[static_cast<size_t>(loop.next_below(bucket.size()))];
        StepStats stats = train_step(model, batch, tc.fusion_dropout, opt, loop);
        if (!std::isfinite(stats.loss))
            throw NumericError("loss diverged at step " + std::to_string(step + 1));
        int64_t done = step + 1;
        if (done % tc.cadence == 0 || done == tc.steps) {
            std::ostringstream line;
            line << done << ' ' << stats.loss;
            if (!heldout_items.empty()) line << " heldout_ce=" << heldout_ce(model, heldout_items);
            line << " lr=" << stats.lr;
            if (log) *log << line.str() << std::endl;
            write_ckpt();
        }
    }
    return model;
}

}  // namespace carc
