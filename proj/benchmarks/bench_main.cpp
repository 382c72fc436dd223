#include <benchmark/benchmark.h>

#include <carc/costs.hpp>
#include <carc/kernels.hpp>
#include <carc/sampler.hpp>
#include <carc/trainer.hpp>

using namespace carc;

namespace {

RunConfig desk_config() {
    return RunConfig::from_text(
        "model.n_layers = 8\n"
        "model.d_model = 256\n"
        "model.n_heads = 8\n"
        "model.s_max = 512\n"
        "model.fusion_mode = add\n"
        "encoder.d_e = 128\n"
        "encoder.n_layers = 2\n"
        "encoder.n_heads = 4\n");
}

void BM_Gemm(benchmark::State& state) {
    int n = static_cast<int>(state.range(0));
    Rng rng(11);
    std::vector<float> a(static_cast<size_t>(n) * n), b(a.size()), c(a.size());
    for (float& x : a) x = static_cast<float>(rng.next_normal());
    for (float& x : b) x = static_cast<float>(rng.next_normal());
    for (auto _ : state) {
        kernels::gemm_nn(n, n, n, a.data(), b.data(), c.data());
        benchmark::DoNotOptimize(c.data());
    }
    state.SetItemsProcessed(state.iterations() * 2LL * n * n * n);
}

void BM_EncoderForward(benchmark::State& state) {
    Model m = Model::init(desk_config(), 1);
    Rng rng(2);
    Sample s = synth_scene(rng, 64, 64);
    ControlImage img = control_from_sample(s, ControlKind::edge);
    for (auto _ : state) {
        ControlTokens ct = m.enc.encode(img);
        benchmark::DoNotOptimize(ct.data.node()->data.data());
    }
}

void BM_Generate(benchmark::State& state) {
    int hw = static_cast<int>(state.range(0));
    Model m = Model::init(desk_config(), 1);
    Rng rng(2);
    Sample s = synth_scene(rng, hw, hw);
    ControlTokens ct = m.enc.encode(control_from_sample(s, ControlKind::edge));
    SamplingParams params;
    for (auto _ : state) {
        TokenGrid g = generate(m.dec, s.class_id, ct, m.fusion, params);
        benchmark::DoNotOptimize(g.tokens.data());
    }
    state.SetItemsProcessed(state.iterations() * (hw / kPatch) * (hw / kPatch));
}

void BM_TrainStep(benchmark::State& state) {
    RunConfig cfg = desk_config();
    Model m = Model::init(cfg, 1);
    AdamW opt(set_trainable(m, cfg.train.regime),
              AdamWConfig{cfg.train.lr, 0.9f, 0.95f, 1e-8f, cfg.train.weight_decay, 0});
    Rng rng(3);
    std::vector<TrainItem> batch;
    Palette pal = default_palette();
    for (int i = 0; i < 2; ++i) batch.push_back(make_train_item(synth_scene(rng, 64, 64), ControlKind::edge, pal));
    for (auto _ : state) {
        StepStats st = train_step(m, batch, 0.0f, opt, rng);
        benchmark::DoNotOptimize(st.loss);
    }
}

void BM_TokenizerRoundTrip(benchmark::State& state) {
    Rng rng(4);
    Sample s = synth_scene(rng, 64, 64);
    Palette pal = default_palette();
    for (auto _ : state) {
        TokenGrid g = encode_image(s.image, pal);
        Raster r = decode_tokens(g, pal);
        benchmark::DoNotOptimize(r.pix.data());
    }
}

}  // namespace

BENCHMARK(BM_Gemm)->Arg(64)->Arg(128)->Arg(256);
BENCHMARK(BM_EncoderForward);
BENCHMARK(BM_Generate)->Arg(64)->Arg(96);
BENCHMARK(BM_TrainStep);
BENCHMARK(BM_TokenizerRoundTrip);

BENCHMARK_MAIN();
