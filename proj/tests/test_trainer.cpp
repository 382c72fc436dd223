#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <carc/checkpoint.hpp>
#include <carc/error.hpp>
#include <carc/trainer.hpp>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

using namespace carc;

namespace {

RunConfig tiny_cfg(const std::string& extra = "") {
    RunConfig cfg = RunConfig::from_text(
        "model.n_layers = 2\n"
        "model.d_model = 32\n"
        "model.n_heads = 4\n"
        "model.s_max = 32\n"
        "model.fusion_mode = add\n"
        "encoder.d_e = 16\n"
        "encoder.n_layers = 1\n"
        "encoder.n_heads = 2\n"
        "train.batch = 2\n"
        "train.steps = 4\n"
        "train.warmup = 2\n"
        "train.cadence = 2\n"
        "train.heldout = 2\n"
        "train.fusion_dropout = 0.5\n"
        "train.resolutions = 32x32\n"
        "train.t_max = 16\n");
    if (!extra.empty()) cfg.apply(parse_kv_text(extra));
    return cfg;
}

std::vector<Sample> tiny_data(int n, uint64_t seed = 1) {
    Rng rng(seed);
    std::vector<Sample> data;
    for (int i = 0; i < n; ++i) data.push_back(synth_scene(rng, 32, 32));
    return data;
}

std::string tmp_path(const std::string& leaf) {
    return (std::filesystem::temp_directory_path() / leaf).string();
}

std::vector<char> slurp(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    REQUIRE(in);
    return std::vector<char>(std::istreambuf_iterator<char>(in), {});
}

bool all_zero(const std::vector<float>& v) {
    for (float x : v)
        if (x != 0.0f) return false;
    return true;
}

}  // namespace

TEST_CASE("items carry the right control plane and tokens") {
    Rng rng(3);
    Sample s = synth_scene(rng, 32, 64);

    ControlImage edge = control_from_sample(s, ControlKind::edge);
    CHECK(edge.maxval == 255);
    CHECK(edge.raster.pix == s.edge.pix);
    ControlImage seg = control_from_sample(s, ControlKind::segmentation);
    CHECK(seg.maxval == kMaxShapes);
    ControlImage depth = control_from_sample(s, ControlKind::depth);
    CHECK(depth.raster.pix == s.depth.pix);
    CHECK_THROWS_AS(control_from_sample(s, ControlKind::resolution_map), ConfigError);

    TrainItem item = make_train_item(s, ControlKind::edge, default_palette());
    CHECK(item.tokens.rows == 2);
    CHECK(item.tokens.cols == 4);
    CHECK(item.class_id == s.class_id);
    for (int t : item.tokens.tokens) {
        CHECK(t >= 0);
        CHECK(t < kVocabSize);
    }
}

TEST_CASE("resolution draws respect both caps") {
    TrainConfig tc;
    tc.resolutions = {{32, 32}, {64, 64}, {96, 96}};  // 4, 16, 36 tokens
    tc.t_max = 32;

    Rng rng(5);
    bool small = false, medium = false;
    for (int i = 0; i < 200; ++i) {
        auto [h, w] = sample_resolution(tc, FusionMode::add, 128, rng);
        CHECK(h != 96);  // 36 tokens exceed t_max
        small = small || h == 32;
        medium = medium || h == 64;
    }
    CHECK(small);
    CHECK(medium);

    // prefill halves the usable context: 64x64 would need 32 positions
    for (int i = 0; i < 50; ++i) {
        auto [h, w] = sample_resolution(tc, FusionMode::prefill, 16, rng);
        CHECK(h == 32);
    }

    tc.t_max = 2;
    try {
        sample_resolution(tc, FusionMode::add, 128, rng);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("t_max=2") != std::string::npos);
    }
}

TEST_CASE("a fresh model starts at the uniform-vocabulary entropy") {
    RunConfig cfg = tiny_cfg();
    Model m = Model::init(cfg, 0);
    std::vector<Tensor> trainable = set_trainable(m, TrainRegime::full);
    AdamW opt(trainable, {});
    std::vector<TrainItem> batch;
    for (const auto& s : tiny_data(2))
        batch.push_back(make_train_item(s, cfg.control, default_palette()));
    Rng rng(0);
    StepStats stats = train_step(m, batch, 0.0f, opt, rng);
    CHECK(stats.loss == doctest::Approx(std::log(64.0)).epsilon(0.05));
    CHECK(stats.dropped == 0);
    CHECK(opt.step_count() == 1);
}

TEST_CASE("full dropout leaves the whole control path untouched") {
    RunConfig cfg = tiny_cfg();
    Model m = Model::init(cfg, 4);
    std::vector<Tensor> trainable = set_trainable(m, TrainRegime::full);
    AdamW opt(trainable, {});
    std::vector<TrainItem> batch;
    for (const auto& s : tiny_data(2, 7))
        batch.push_back(make_train_item(s, cfg.control, default_palette()));

    Rng rng(1);
    StepStats stats = train_step(m, batch, 1.0f, opt, rng);
    CHECK(stats.dropped == 2);

    bool saw_decoder_grad = false;
    for (const auto& [name, t] : m.named_params()) {
        if (is_control_param(name)) {
            CAPTURE(name);
            CHECK(all_zero(t.node()->grad));
        } else if (!all_zero(t.node()->grad)) {
            saw_decoder_grad = true;
        }
    }
    CHECK(saw_decoder_grad);

    // with the coin forced the other way the fusion tap trains
    Model m2 = Model::init(cfg, 4);
    std::vector<Tensor> t2 = set_trainable(m2, TrainRegime::full);
    AdamW opt2(t2, {});
    train_step(m2, batch, 0.0f, opt2, rng);
    bool fusion_grad = false;
    for (const auto& [name, t] : m2.named_params())
        if (name.rfind("fusion", 0) == 0 && !all_zero(t.node()->grad)) fusion_grad = true;
    CHECK(fusion_grad);
}

TEST_CASE("the freeze regime trains only the control path") {
    RunConfig cfg = tiny_cfg("train.regime = freeze\ntrain.fusion_dropout = 0\n");
    std::vector<Sample> data = tiny_data(6);
    Model ref = Model::init(cfg, cfg.train.seed);
    Model trained = run_training(cfg, data, tmp_path("carc_tr_freeze.bin"), nullptr);

    auto ref_params = ref.named_params();
    auto out_params = trained.named_params();
    REQUIRE(ref_params.size() == out_params.size());
    bool control_moved = false;
    for (size_t i = 0; i < ref_params.size(); ++i) {
        const auto& [name, rt] = ref_params[i];
        const auto& ot = out_params[i].second;
        if (is_control_param(name)) {
            control_moved = control_moved || ot.node()->data != rt.node()->data;
        } else {
            CAPTURE(name);
            CHECK(ot.node()->data == rt.node()->data);
        }
    }
    CHECK(control_moved);
}

TEST_CASE("zero steps checkpoints the initialization") {
    RunConfig cfg = tiny_cfg("train.steps = 0\n");
    std::string p = tmp_path("carc_tr_zero.bin");
    Model trained = run_training(cfg, tiny_data(4), p, nullptr);
    Model ref = Model::init(cfg, cfg.train.seed);

    RunConfig cfg_back;
    Model loaded = model_from_checkpoint(load_checkpoint(p), cfg_back);
    auto a = ref.named_params(), b = loaded.named_params(), c = trained.named_params();
    REQUIRE(a.size() == b.size());
    for (size_t i = 0; i < a.size(); ++i) {
        CHECK(a[i].second.node()->data == b[i].second.node()->data);
        CHECK(a[i].second.node()->data == c[i].second.node()->data);
    }
}

TEST_CASE("interrupting and resuming is invisible in the result") {
    std::vector<Sample> data = tiny_data(10);
    std::string full_ckpt = tmp_path("carc_tr_full.bin");
    std::string full_again = tmp_path("carc_tr_full2.bin");
    std::string half_ckpt = tmp_path("carc_tr_half.bin");
    std::string resumed_ckpt = tmp_path("carc_tr_resumed.bin");

    RunConfig six = tiny_cfg("train.steps = 6\ntrain.cadence = 3\n");
    std::ostringstream log_a, log_b;
    run_training(six, data, full_ckpt, &log_a);
    run_training(six, data, full_again, nullptr);
    CHECK(slurp(full_ckpt) == slurp(full_again));  // same seed, same bytes

    RunConfig three = tiny_cfg("train.steps = 3\ntrain.cadence = 3\n");
    run_training(three, data, half_ckpt, nullptr);
    run_training(six, data, resumed_ckpt, &log_b, half_ckpt);
    CHECK(slurp(resumed_ckpt) == slurp(full_ckpt));

    // the uninterrupted log covers steps 3 and 6; the resumed one only 6,
    // and the final lines agree
    std::string a = log_a.str(), b = log_b.str();
    REQUIRE(a.find('\n') != a.rfind('\n'));
    CHECK(a.rfind("3 ", 0) == 0);
    CHECK(b.rfind("6 ", 0) == 0);
    CHECK(a.substr(a.find('\n') + 1) == b);

    // resuming past the end just re-checkpoints
    std::string idle_ckpt = tmp_path("carc_tr_idle.bin");
    run_training(three, data, idle_ckpt, nullptr, half_ckpt);
    CHECK(slurp(idle_ckpt) == slurp(half_ckpt));
}

TEST_CASE("resume refuses a different architecture") {
    std::vector<Sample> data = tiny_data(4);
    std::string p = tmp_path("carc_tr_arch.bin");
    run_training(tiny_cfg("train.steps = 1\n"), data, p, nullptr);
    RunConfig wider = tiny_cfg("train.steps = 2\nmodel.d_model = 64\n");
    CHECK_THROWS_AS(run_training(wider, data, tmp_path("carc_tr_x.bin"), nullptr, p),
                    ConfigError);
    // schedule changes are fine
    RunConfig longer = tiny_cfg("train.steps = 2\ntrain.lr = 0.0001\n");
    run_training(longer, data, tmp_path("carc_tr_y.bin"), nullptr, p);
}

TEST_CASE("training data must back every drawable resolution") {
    RunConfig cfg = tiny_cfg(
        "train.resolutions = 32x32,64x64\ntrain.t_max = 64\nmodel.s_max = 64\n");
    std::vector<Sample> only_small = tiny_data(4);
    try {
        run_training(cfg, only_small, tmp_path("carc_tr_gap.bin"), nullptr);
        FAIL("expected ConfigError");
    } catch (const ConfigError& e) {
        CHECK(std::string(e.what()).find("64x64") != std::string::npos);
    }

    // a resolution nothing can draw may go unbacked
    RunConfig capped =
        tiny_cfg("train.resolutions = 32x32,64x64\ntrain.steps = 1\ntrain.t_max = 8\n");
    run_training(capped, only_small, tmp_path("carc_tr_cap.bin"), nullptr);

    CHECK_THROWS_AS(run_training(cfg, {}, tmp_path("carc_tr_none.bin"), nullptr), ConfigError);
}

TEST_CASE("divergence is reported with its step") {
    RunConfig cfg = tiny_cfg("train.steps = 0\n");
    std::string p = tmp_path("carc_tr_poison.bin");
    std::vector<Sample> data = tiny_data(4);
    run_training(cfg, data, p, nullptr);

    Checkpoint ckpt = load_checkpoint(p);
    bool poisoned = false;
    for (auto& t : ckpt.tensors)
        if (t.name == "final_norm.w") {
            t.data[0] = std::nanf("");
            poisoned = true;
        }
    REQUIRE(poisoned);
    save_checkpoint(p, ckpt);

    RunConfig two = tiny_cfg("train.steps = 2\n");
    try {
        run_training(two, data, tmp_path("carc_tr_np.bin"), nullptr, p);
        FAIL("expected NumericError");
    } catch (const NumericError& e) {
        CHECK(std::string(e.what()).find("step 1") != std::string::npos);
    }
}

TEST_CASE("cadence lines report loss, heldout quality, and lr") {
    RunConfig cfg = tiny_cfg("train.steps = 2\ntrain.cadence = 1\n");
    std::ostringstream log;
    run_training(cfg, tiny_data(6), tmp_path("carc_tr_log.bin"), &log);
    std::istringstream lines(log.str());
    std::string line;
    int n = 0;
    while (std::getline(lines, line)) {
        ++n;
        std::istringstream ls(line);
        int step = 0;
        double loss = 0;
        std::string held, lr;
        REQUIRE((ls >> step >> loss >> held >> lr));
        CHECK(step == n);
        CHECK(std::isfinite(loss));
        CHECK(held.rfind("heldout_ce=", 0) == 0);
        CHECK(lr.rfind("lr=", 0) == 0);
    }
    CHECK(n == 2);
}

TEST_CASE("a single scene can be memorized") {
    RunConfig cfg = tiny_cfg(
        "train.steps = 400\n"
        "train.cadence = 400\n"
        "train.heldout = 0\n"
        "train.fusion_dropout = 0\n"
        "train.warmup = 20\n"
        "train.lr = 0.005\n");
    std::vector<Sample> data = tiny_data(1, 42);
    Model m = run_training(cfg, data, tmp_path("carc_tr_overfit.bin"), nullptr);
    TrainItem item = make_train_item(data[0], cfg.control, default_palette());
    CHECK(heldout_ce(m, {item}) < 0.2);
}
