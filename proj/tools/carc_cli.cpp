// carc: corpus synthesis, training, sampling, evaluation, and cost probes
// for the controllable token-grid generator, one subcommand per run.
#include <CLI11.hpp>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <carc/checkpoint.hpp>
#include <carc/costs.hpp>
#include <carc/error.hpp>
#include <carc/eval.hpp>
#include <carc/trainer.hpp>

using namespace carc;

namespace {

std::pair<int, int> parse_size(const std::string& s) {
    size_t x = s.find('x');
    if (x == std::string::npos || x == 0 || x + 1 == s.size())
        throw ConfigError("expected HxW, got '" + s + "'");
    try {
        size_t ua = 0, ub = 0;
        int h = std::stoi(s.substr(0, x), &ua);
        int w = std::stoi(s.substr(x + 1), &ub);
        if (ua != x || ub != s.size() - x - 1) throw std::invalid_argument("");
        return {h, w};
    } catch (const std::exception&) {
        throw ConfigError("expected HxW, got '" + s + "'");
    }
}

std::vector<std::pair<int, int>> parse_sizes(const std::string& csv) {
    std::vector<std::pair<int, int>> out;
    std::string item;
    std::istringstream in(csv);
    while (std::getline(in, item, ',')) {
        auto [h, w] = parse_size(item);
        if (h < 32 || w < 32 || h % kPatch || w % kPatch)
            throw ConfigError("size " + item + " must be a multiple of " +
                              std::to_string(kPatch) + " and at least 32x32");
        out.push_back({h, w});
    }
    if (out.empty()) throw ConfigError("no sizes given");
    return out;
}

std::map<std::string, std::string> override_map(const std::vector<std::string>& sets) {
    std::map<std::string, std::string> out;
    for (const std::string& s : sets) {
        size_t eq = s.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got '" + s + "'");
        out[s.substr(0, eq)] = s.substr(eq + 1);
    }
    return out;
}

void log_config(const RunConfig& cfg) {
    std::istringstream in(cfg.to_text());
    std::string line;
    while (std::getline(in, line)) std::cout << "# " << line << "\n";
}

RunConfig config_from_flags(const std::string& config_path,
                            const std::vector<std::string>& sets) {
    RunConfig cfg = config_path.empty() ? RunConfig{} : RunConfig::from_file(config_path);
    cfg.apply(override_map(sets));
    return cfg;
}

Model model_from_file(const std::string& path, RunConfig& cfg_out) {
    return model_from_checkpoint(load_checkpoint(path), cfg_out);
}

void require_palette_vocab(const RunConfig& cfg) {
    if (cfg.model.vocab != kVocabSize)
        throw ConfigError("model.vocab is " + std::to_string(cfg.model.vocab) +
                          " but the palette codec requires " + std::to_string(kVocabSize));
}

int cmd_synth(const std::string& out_dir, int n, uint64_t seed, const std::string& sizes_csv) {
    auto sizes = parse_sizes(sizes_csv);
    Rng rng(seed);
    std::vector<Sample> samples;
    char id[32];
    for (int i = 0; i < n; ++i) {
        auto [h, w] = sizes[static_cast<size_t>(i) % sizes.size()];
        Sample s = synth_scene(rng, h, w);
        std::snprintf(id, sizeof id, "s%06d", i);
        s.id = id;
        samples.push_back(std::move(s));
    }
    std::string manifest = write_manifest(samples, out_dir);
    std::cout << manifest << "\n";
    return 0;
}

int cmd_train(const std::string& config_path, const std::string& data_dir,
              const std::string& out_ckpt, const std::string& resume,
              const std::vector<std::string>& sets) {
    RunConfig cfg = config_from_flags(config_path, sets);
    require_palette_vocab(cfg);
    log_config(cfg);
    std::vector<Sample> data = read_manifest(data_dir);
    run_training(cfg, data, out_ckpt, &std::cout, resume);
    std::cout << out_ckpt << "\n";
    return 0;
}

ControlImage control_from_file(const std::string& path, ControlKind kind) {
    int maxval = 0;
    Raster raster = read_image(path, maxval);
    ControlImage img{kind, std::move(raster), maxval};
    validate_control(img);
    return img;
}

int cmd_sample(const std::string& ckpt_path, int class_id, const std::string& control_path,
               const std::string& res, float alpha, uint64_t seed, float temperature, int top_k,
               const std::string& out_path) {
    if (control_path.empty() == res.empty())
        throw ConfigError("pass exactly one of --control or --res");
    RunConfig cfg;
    Model m = model_from_file(ckpt_path, cfg);
    require_palette_vocab(cfg);
    log_config(cfg);

    ControlImage control;
    if (!control_path.empty()) {
        control = control_from_file(control_path, cfg.control);
    } else {
        auto [h, w] = parse_size(res);
        control = resolution_map(h, w);
    }

    SamplingParams params = cfg.sample;
    params.alpha = alpha;
    params.seed = seed;
    if (temperature >= 0) params.temperature = temperature;
    if (top_k > 0) params.top_k = top_k;

    ControlTokens ct = m.enc.encode(control);
    TokenGrid grid = generate(m.dec, class_id, ct, m.fusion, params);
    write_ppm(out_path, decode_tokens(grid, default_palette()));
    std::cout << grid_to_text(grid) << "\n";
    std::cout << out_path << "\n";
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, const std::string& mode,
             int n_max, float alpha, uint64_t seed, float temperature, int top_k) {
    RunConfig cfg;
    Model m = model_from_file(ckpt_path, cfg);
    require_palette_vocab(cfg);
    log_config(cfg);

    ControlKind kind = mode.empty() ? cfg.control : control_kind_from_string(mode);
    if (kind == ControlKind::resolution_map)
        throw ConfigError("--mode must be edge, seg, or depth");
    std::vector<Sample> data = read_manifest(data_dir);
    SamplingParams params = cfg.sample;
    params.alpha = alpha;
    params.seed = seed;
    if (temperature >= 0) params.temperature = temperature;
    if (top_k > 0) params.top_k = top_k;
    EvalReport report = evaluate(m, data, kind, params, n_max);
    std::cout << report.to_line() << "\n";
    return 0;
}

FusionSpec bench_spec(const RunConfig& cfg, FusionMode mode) {
    FusionSpec spec;
    spec.mode = mode;
    if (mode == FusionMode::add || mode == FusionMode::cross_attn) {
        spec.fusion_layers = cfg.fusion.mode == mode && !cfg.fusion.fusion_layers.empty()
                                 ? cfg.fusion.fusion_layers
                                 : default_fusion_layers(cfg.model.n_layers);
    }
    return spec;
}

int cmd_bench(const std::string& config_path, const std::string& modes_csv,
              const std::string& sizes_csv, int trials, uint64_t seed,
              const std::vector<std::string>& sets) {
    RunConfig cfg = config_from_flags(config_path, sets);
    log_config(cfg);

    std::vector<FusionMode> modes;
    {
        std::istringstream in(modes_csv);
        std::string item;
        while (std::getline(in, item, ',')) modes.push_back(fusion_mode_from_string(item));
        if (modes.empty()) throw ConfigError("no modes given");
    }

    for (auto [h, w] : parse_sizes(sizes_csv)) {
        int rows = h / kPatch, cols = w / kPatch;
        int64_t n = static_cast<int64_t>(rows) * cols;
        std::map<FusionMode, double> flops, latency, footprint;
        for (FusionMode mode : modes) {
            RunConfig mode_cfg = cfg;
            mode_cfg.apply({{"model.fusion_mode", fusion_mode_name(mode)},
                            {"model.fusion_layers", "auto"}});
            FusionSpec spec = bench_spec(mode_cfg, mode);
            FlopsBreakdown fb = flops_estimate(mode_cfg.model, spec, n, n);
            int64_t params = Model::init(mode_cfg, seed).param_count();
            int64_t bytes =
                footprint_bytes(params, mode_cfg.model, mode, n, n, mode_cfg.train.batch);
            LatencyReport lat = measure_train_step(mode_cfg, rows, cols, trials, seed);

            flops[mode] = fb.attn_score;
            latency[mode] = lat.median_ms;
            footprint[mode] = static_cast<double>(bytes);
            std::cout << "size=" << h << "x" << w << " mode=" << fusion_mode_name(mode)
                      << " attn_score_flops=" << fb.attn_score << " total_flops=" << fb.total()
                      << " footprint_bytes=" << bytes << " train_step_ms=" << lat.median_ms
                      << "\n";
        }
        if (flops.count(FusionMode::add) && flops.count(FusionMode::prefill)) {
            std::cout << "size=" << h << "x" << w << " prefill/add"
                      << " attn_score_ratio=" << flops[FusionMode::prefill] / flops[FusionMode::add]
                      << " latency_ratio="
                      << latency[FusionMode::prefill] / latency[FusionMode::add]
                      << " footprint_ratio="
                      << footprint[FusionMode::prefill] / footprint[FusionMode::add] << "\n";
        }
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    std::cout << std::unitbuf;  // cadence lines reach redirected logs promptly
    CLI::App app{"controllable token-grid generation"};
    app.require_subcommand(1);

    auto* synth = app.add_subcommand("synth", "write a synthetic scene corpus");
    std::string synth_out = "corpus";
    int synth_n = 100;
    uint64_t synth_seed = 0;
    std::string synth_sizes = "64x64";
    synth->add_option("--out", synth_out, "output directory");
    synth->add_option("--n", synth_n, "number of samples")->check(CLI::NonNegativeNumber);
    synth->add_option("--seed", synth_seed, "rng seed");
    synth->add_option("--sizes", synth_sizes, "comma-separated HxW list, cycled over samples");

    auto* train = app.add_subcommand("train", "train from a manifest directory");
    std::string train_config, train_data, train_out = "model.ckpt", train_resume;
    std::vector<std::string> train_sets;
    train->add_option("--config", train_config, "run config file");
    train->add_option("--data", train_data, "manifest directory")->required();
    train->add_option("--out", train_out, "checkpoint to write");
    train->add_option("--resume", train_resume, "checkpoint to continue from");
    train->add_option("--set", train_sets, "key=value config override (repeatable)");

    auto* sample = app.add_subcommand("sample", "generate one image from a checkpoint");
    std::string sample_ckpt, sample_control, sample_res, sample_out = "sample.ppm";
    int sample_class = 0, sample_topk = 0;
    float sample_alpha = 1.0f, sample_temp = -1.0f;
    uint64_t sample_seed = 0;
    sample->add_option("--ckpt", sample_ckpt, "checkpoint file")->required();
    sample->add_option("--class", sample_class, "class id");
    sample->add_option("--control", sample_control, "control raster (pgm)");
    sample->add_option("--res", sample_res, "HxW resolution-map control");
    sample->add_option("--alpha", sample_alpha, "control strength in [0,1]");
    sample->add_option("--seed", sample_seed, "sampling seed");
    sample->add_option("--temperature", sample_temp, "softmax temperature");
    sample->add_option("--top-k", sample_topk, "top-k cutoff");
    sample->add_option("--out", sample_out, "output ppm");

    auto* eval = app.add_subcommand("eval", "score a checkpoint against a manifest");
    std::string eval_ckpt, eval_data, eval_mode;
    int eval_n = 200;
    float eval_alpha = 1.0f;
    uint64_t eval_seed = 0;
    eval->add_option("--ckpt", eval_ckpt, "checkpoint file")->required();
    eval->add_option("--data", eval_data, "manifest directory")->required();
    eval->add_option("--mode", eval_mode, "control kind (default: the checkpoint's)");
    eval->add_option("--n", eval_n, "max samples to score");
    eval->add_option("--alpha", eval_alpha, "control strength in [0,1]");
    eval->add_option("--seed", eval_seed, "sampling seed");
    float eval_temp = -1.0f;
    eval->add_option("--temperature", eval_temp, "softmax temperature");
    int eval_topk = 0;
    eval->add_option("--top-k", eval_topk, "top-k cutoff");

    auto* bench = app.add_subcommand("bench", "analytic and measured mode costs");
    std::string bench_config, bench_modes = "add,prefill", bench_sizes = "64x64";
    int bench_trials = 5;
    uint64_t bench_seed = 0;
    std::vector<std::string> bench_sets;
    bench->add_option("--config", bench_config, "run config file");
    bench->add_option("--modes", bench_modes, "comma-separated fusion modes");
    bench->add_option("--sizes", bench_sizes, "comma-separated HxW list");
    bench->add_option("--trials", bench_trials, "timed train steps per mode");
    bench->add_option("--seed", bench_seed, "init seed");
    bench->add_option("--set", bench_sets, "key=value config override (repeatable)");

    try {
        app.parse(argc, argv);
        if (*synth) return cmd_synth(synth_out, synth_n, synth_seed, synth_sizes);
        if (*train) return cmd_train(train_config, train_data, train_out, train_resume,
                                     train_sets);
        if (*sample) return cmd_sample(sample_ckpt, sample_class, sample_control, sample_res,
                                       sample_alpha, sample_seed, sample_temp, sample_topk,
                                       sample_out);
        if (*eval) return cmd_eval(eval_ckpt, eval_data, eval_mode, eval_n, eval_alpha,
                                   eval_seed, eval_temp, eval_topk);
        if (*bench) return cmd_bench(bench_config, bench_modes, bench_sizes, bench_trials,
                                     bench_seed, bench_sets);
        return 1;
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return 1;
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
}
