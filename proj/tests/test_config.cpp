#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <carc/config.hpp>
#include <carc/error.hpp>
#include <string>

using namespace carc;

namespace {

bool throws_mentioning(const std::string& text, const std::string& needle) {
    try {
        RunConfig::from_text(text);
    } catch (const ConfigError& e) {
        return std::string(e.what()).find(needle) != std::string::npos;
    }
    return false;
}

}  // namespace

TEST_CASE("the default config round-trips through its own text form") {
    RunConfig def;
    std::string text = def.to_text();
    RunConfig back = RunConfig::from_text(text);
    CHECK(back.to_text() == text);
    CHECK(RunConfig::from_text("").to_text() == text);
}

TEST_CASE("every section parses and lands in the right field") {
    auto cfg = RunConfig::from_text(
        "# comment line\n"
        "\n"
        "model.n_layers = 12\n"
        "model.d_model = 64   # trailing comment\n"
        "model.n_heads = 4\n"
        "model.mlp_ratio = 2\n"
        "model.s_max = 300\n"
        "model.rope_base = 500.0\n"
        "model.fusion_mode = cross_attn\n"
        "model.alpha_pre_projection = true\n"
        "encoder.d_e = 96\n"
        "encoder.n_layers = 2\n"
        "encoder.n_heads = 3\n"
        "encoder.mlp_ratio = 2\n"
        "train.lr = 0.001\n"
        "train.warmup = 7\n"
        "train.weight_decay = 0.1\n"
        "train.batch = 4\n"
        "train.steps = 42\n"
        "train.fusion_dropout = 0.25\n"
        "train.regime = freeze\n"
        "train.resolutions = 64x64, 96x64,64x96\n"
        "train.t_max = 48\n"
        "train.cadence = 5\n"
        "train.heldout = 3\n"
        "train.seed = 11\n"
        "sample.temperature = 0.9\n"
        "sample.top_k = 32\n"
        "sample.seed = 13\n"
        "sample.alpha = 0.5\n"
        "sample.cfg_scale = 2.0\n"
        "data.control = seg\n");
    CHECK(cfg.model.n_layers == 12);
    CHECK(cfg.model.d_model == 64);
    CHECK(cfg.model.rope_base == 500.0f);
    CHECK(cfg.fusion.mode == FusionMode::cross_attn);
    CHECK(cfg.fusion.alpha_pre_projection);
    CHECK(cfg.encoder.d_e == 96);
    CHECK(cfg.model.d_e == 96);  // follows the encoder, not a key of its own
    CHECK(cfg.train.lr == 0.001f);
    CHECK(cfg.train.regime == TrainRegime::freeze_backbone);
    CHECK(cfg.train.resolutions ==
          std::vector<std::pair<int, int>>{{64, 64}, {96, 64}, {64, 96}});
    CHECK(cfg.train.seed == 11);
    CHECK(cfg.sample.top_k == 32);
    CHECK(cfg.sample.cfg_scale == 2.0f);
    CHECK(cfg.control == ControlKind::segmentation);

    RunConfig back = RunConfig::from_text(cfg.to_text());
    CHECK(back.to_text() == cfg.to_text());
}

TEST_CASE("automatic fusion layers follow the depth, explicit ones stick") {
    auto twelve = RunConfig::from_text("model.n_layers = 12\nmodel.fusion_mode = add\n");
    CHECK(twelve.fusion.fusion_layers == std::vector<int>{1, 5, 9});

    auto six = RunConfig::from_text("model.n_layers = 6\nmodel.fusion_mode = add\n");
    CHECK(six.fusion.fusion_layers == std::vector<int>{1, 3, 5});

    auto pinned = RunConfig::from_text(
        "model.fusion_mode = add\nmodel.fusion_layers = 2, 6\n");
    CHECK(pinned.fusion.fusion_layers == std::vector<int>{2, 6});

    // prefill and none have no per-layer taps
    auto pre = RunConfig::from_text("model.fusion_mode = prefill\n");
    CHECK(pre.fusion.fusion_layers.empty());
    auto none = RunConfig::from_text("model.fusion_mode = none\n");
    CHECK(none.fusion.fusion_layers.empty());

    CHECK_THROWS_AS(
        RunConfig::from_text("model.fusion_mode = add\nmodel.fusion_layers = 9\n"),
        ConfigError);  // default depth is 8
    CHECK_THROWS_AS(
        RunConfig::from_text("model.fusion_mode = add\nmodel.fusion_layers = 0\n"),
        ConfigError);
}

TEST_CASE("bad input is rejected with the offending name") {
    CHECK(throws_mentioning("model.depth = 4\n", "model.depth"));
    CHECK(throws_mentioning("model.n_layers = soon\n", "soon"));
    CHECK(throws_mentioning("train.lr = fast\n", "train.lr"));
    CHECK(throws_mentioning("model.alpha_pre_projection = yes\n", "yes"));
    CHECK(throws_mentioning("train.resolutions = 64\n", "HxW"));
    CHECK(throws_mentioning("model.n_layers = 4\nmodel.n_layers = 5\n", "duplicate"));
    CHECK(throws_mentioning("model.n_layers\n", "key = value"));
    CHECK(throws_mentioning("data.control = resmap\n", "edge, seg, or depth"));
    CHECK(throws_mentioning("data.control = voxels\n", "voxels"));
    CHECK(throws_mentioning("train.regime = frozen\n", "frozen"));
    CHECK(throws_mentioning("train.resolutions = 60x64\n", "60x64"));
    CHECK(throws_mentioning("sample.top_k = 0\n", "top_k"));
    CHECK(throws_mentioning("train.fusion_dropout = 1.5\n", "fusion_dropout"));
}

TEST_CASE("overrides layer on top and re-resolve") {
    RunConfig cfg = RunConfig::from_text("model.fusion_mode = add\n");
    CHECK(cfg.fusion.fusion_layers == std::vector<int>{1, 4, 7});

    cfg.apply({{"sample.alpha", "0.25"}, {"train.batch", "2"}});
    CHECK(cfg.sample.alpha == 0.25f);
    CHECK(cfg.train.batch == 2);
    CHECK(cfg.fusion.fusion_layers == std::vector<int>{1, 4, 7});  // untouched

    cfg.apply({{"model.n_layers", "12"}, {"model.fusion_layers", "auto"}});
    CHECK(cfg.fusion.fusion_layers == std::vector<int>{1, 5, 9});

    // explicit layers survive a later depth change when still in range
    cfg.apply({{"model.fusion_layers", "2,6"}});
    cfg.apply({{"model.n_layers", "8"}});
    CHECK(cfg.fusion.fusion_layers == std::vector<int>{2, 6});

    CHECK_THROWS_AS(cfg.apply({{"model.widths", "3"}}), ConfigError);
    CHECK_THROWS_AS(cfg.apply({{"train.batch", "0"}}), ConfigError);
}

TEST_CASE("the raw line parser trims, dedupes, and skips noise") {
    auto kv = parse_kv_text("  a.b = 1 \n# full comment\n\nc = x y  # tail\n");
    CHECK(kv.size() == 2);
    CHECK(kv.at("a.b") == "1");
    CHECK(kv.at("c") == "x y");
    CHECK_THROWS_AS(parse_kv_text("k = 1\nk = 2\n"), ConfigError);
    CHECK_THROWS_AS(parse_kv_text(" = 3\n"), ConfigError);
}

TEST_CASE("regime names parse both ways") {
    CHECK(train_regime_name(TrainRegime::full) == "full");
    CHECK(train_regime_name(TrainRegime::freeze_backbone) == "freeze");
    CHECK(train_regime_from_string("full") == TrainRegime::full);
    CHECK(train_regime_from_string("freeze") == TrainRegime::freeze_backbone);
    CHECK(train_regime_from_string("freeze-backbone") == TrainRegime::freeze_backbone);
    CHECK_THROWS_AS(train_regime_from_string(""), ConfigError);
}
