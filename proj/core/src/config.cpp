#include "carc/config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "carc/error.hpp"

namespace carc {

std::string train_regime_name(TrainRegime r) {
    return r == TrainRegime::full ? "full" : "freeze";
}

TrainRegime train_regime_from_string(const std::string& s) {
    if (s == "full") return TrainRegime::full;
    if (s == "freeze" || s == "freeze-backbone") return TrainRegime::freeze_backbone;
    throw ConfigError("unknown train regime '" + s + "' (expected full or freeze)");
}

void TrainConfig::validate() const {
    if (!(lr > 0) || !std::isfinite(lr)) throw ConfigError("train.lr must be positive and finite");
    if (warmup < 0) throw ConfigError("train.warmup must be non-negative");
    if (weight_decay < 0) throw ConfigError("train.weight_decay must be non-negative");
    if (batch < 1) throw ConfigError("train.batch must be at least 1");
    if (steps < 0) throw ConfigError("train.steps must be non-negative");
    if (fusion_dropout < 0 || fusion_dropout > 1)
        throw ConfigError("train.fusion_dropout must lie in [0, 1]");
    if (resolutions.empty()) throw ConfigError("train.resolutions must list at least one size");
    for (auto [h, w] : resolutions)
        if (h < 16 || w < 16 || h % 16 || w % 16)
            throw ConfigError("train.resolutions entries must be positive multiples of 16, got " +
                              std::to_string(h) + "x" + std::to_string(w));
    if (t_max < 1) throw ConfigError("train.t_max must be at least 1");
    if (cadence < 1) throw ConfigError("train.cadence must be at least 1");
    if (heldout < 0) throw ConfigError("train.heldout must be non-negative");
}

namespace {

std::string trim(const std::string& s) {
    size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return "";
    size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

int parse_int(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        int out = std::stoi(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    }
}

uint64_t parse_u64(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        uint64_t out = std::stoull(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected an unsigned integer, got '" + v +
                          "'");
    }
}

float parse_float(const std::string& key, const std::string& v) {
    try {
        size_t used = 0;
        float out = std::stof(v, &used);
        if (used != v.size()) throw std::invalid_argument("");
        return out;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

bool parse_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : s) {
        if (c == sep) {
            out.push_back(cur);
            cur.clear();
        } else {
            cur += c;
        }
    }
    out.push_back(cur);
    return out;
}

std::string fmt_float(float v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.9g", static_cast<double>(v));
    return buf;
}

std::string fmt_resolutions(const std::vector<std::pair<int, int>>& rs) {
    std::string out;
    for (size_t i = 0; i < rs.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(rs[i].first) + "x" + std::to_string(rs[i].second);
    }
    return out;
}

std::string fmt_layers(const std::vector<int>& ls) {
    std::string out;
    for (size_t i = 0; i < ls.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(ls[i]);
    }
    return out;
}

// The raw fusion-layer request rides alongside the struct so "auto" can be
// re-resolved after a later n_layers override.
struct Setter {
    RunConfig* cfg;
    std::string fusion_layers_raw = "auto";

    void set(const std::string& key, const std::string& value) {
        RunConfig& c = *cfg;
        if (key == "model.n_layers") c.model.n_layers = parse_int(key, value);
        else if (key == "model.d_model") c.model.d_model = parse_int(key, value);
        else if (key == "model.n_heads") c.model.n_heads = parse_int(key, value);
        else if (key == "model.mlp_ratio") c.model.mlp_ratio = parse_int(key, value);
        else if (key == "model.vocab") c.model.vocab = parse_int(key, value);
        else if (key == "model.n_classes") c.model.n_classes = parse_int(key, value);
        else if (key == "model.s_max") c.model.s_max = parse_int(key, value);
        else if (key == "model.rope_base") c.model.rope_base = parse_float(key, value);
        else if (key == "model.fusion_mode") c.fusion.mode = fusion_mode_from_string(value);
        else if (key == "model.fusion_layers") fusion_layers_raw = value;
        else if (key == "model.alpha_pre_projection")
            c.fusion.alpha_pre_projection = parse_bool(key, value);
        else if (key == "encoder.d_e") c.encoder.d_e = parse_int(key, value);
        else if (key == "encoder.n_layers") c.encoder.n_layers = parse_int(key, value);
        else if (key == "encoder.n_heads") c.encoder.n_heads = parse_int(key, value);
        else if (key == "encoder.mlp_ratio") c.encoder.mlp_ratio = parse_int(key, value);
        else if (key == "encoder.in_channels") c.encoder.in_channels = parse_int(key, value);
        else if (key == "train.lr") c.train.lr = parse_float(key, value);
        else if (key == "train.warmup") c.train.warmup = parse_int(key, value);
        else if (key == "train.weight_decay") c.train.weight_decay = parse_float(key, value);
        else if (key == "train.batch") c.train.batch = parse_int(key, value);
        else if (key == "train.steps") c.train.steps = parse_int(key, value);
        else if (key == "train.fusion_dropout") c.train.fusion_dropout = parse_float(key, value);
        else if (key == "train.regime") c.train.regime = train_regime_from_string(value);
        else if (key == "train.resolutions") c.train.resolutions = parse_resolutions(key, value);
        else if (key == "train.t_max") c.train.t_max = parse_int(key, value);
        else if (key == "train.cadence") c.train.cadence = parse_int(key, value);
        else if (key == "train.heldout") c.train.heldout = parse_int(key, value);
        else if (key == "train.seed") c.train.seed = parse_u64(key, value);
        else if (key == "sample.temperature") c.sample.temperature = parse_float(key, value);
        else if (key == "sample.top_k") c.sample.top_k = parse_int(key, value);
        else if (key == "sample.seed") c.sample.seed = parse_u64(key, value);
        else if (key == "sample.alpha") c.sample.alpha = parse_float(key, value);
        else if (key == "sample.cfg_scale") c.sample.cfg_scale = parse_float(key, value);
        else if (key == "data.control") c.control = parse_control(value);
        else throw ConfigError("unknown config key '" + key + "'");
    }

    static ControlKind parse_control(const std::string& value) {
        ControlKind k = control_kind_from_string(value);
        if (k == ControlKind::resolution_map)
            throw ConfigError("data.control must be edge, seg, or depth");
        return k;
    }

    static std::vector<std::pair<int, int>> parse_resolutions(const std::string& key,
                                                              const std::string& value) {
        std::vector<std::pair<int, int>> out;
        for (const std::string& part : split(value, ',')) {
            std::string p = trim(part);
            size_t x = p.find('x');
            if (x == std::string::npos)
                throw ConfigError("config key '" + key + "': expected HxW entries, got '" + p +
                                  "'");
            out.emplace_back(parse_int(key, p.substr(0, x)), parse_int(key, p.substr(x + 1)));
        }
        return out;
    }

    void resolve() {
        RunConfig& c = *cfg;
        c.model.d_e = c.encoder.d_e;
        bool layered = c.fusion.mode == FusionMode::add || c.fusion.mode == FusionMode::cross_attn;
        if (fusion_layers_raw == "auto") {
            c.fusion.fusion_layers =
                layered ? default_fusion_layers(c.model.n_layers) : std::vector<int>{};
        } else {
            c.fusion.fusion_layers.clear();
            for (const std::string& part : split(fusion_layers_raw, ','))
                c.fusion.fusion_layers.push_back(parse_int("model.fusion_layers", trim(part)));
        }
    }
};

}  // namespace

std::map<std::string, std::string> parse_kv_text(const std::string& text) {
    std::map<std::string, std::string> out;
    std::istringstream in(text);
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (size_t hash = line.find('#'); hash != std::string::npos) line.resize(hash);
        line = trim(line);
        if (line.empty()) continue;
        size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) +
                              ": expected `key = value`, got '" + line + "'");
        std::string key = trim(line.substr(0, eq));
        std::string value = trim(line.substr(eq + 1));
        if (key.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key");
        if (!out.emplace(key, value).second)
            throw ConfigError("config line " + std::to_string(lineno) + ": duplicate key '" +
                              key + "'");
    }
    return out;
}

RunConfig RunConfig::from_text(const std::string& text) {
    RunConfig cfg;
    Setter s{&cfg};
    for (const auto& [k, v] : parse_kv_text(text)) s.set(k, v);
    s.resolve();
    cfg.validate();
    return cfg;
}

RunConfig RunConfig::from_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file " + path);
    std::stringstream ss;
    ss << in.rdbuf();
    return from_text(ss.str());
}

void RunConfig::apply(const std::map<std::string, std::string>& overrides) {
    Setter s{this};
    s.fusion_layers_raw = fmt_layers(fusion.fusion_layers);
    if (s.fusion_layers_raw.empty()) s.fusion_layers_raw = "auto";
    for (const auto& [k, v] : overrides) s.set(k, v);
    s.resolve();
    validate();
}

std::string RunConfig::to_text() const {
    std::map<std::string, std::string> kv;
    kv["model.n_layers"] = std::to_string(model.n_layers);
    kv["model.d_model"] = std::to_string(model.d_model);
    kv["model.n_heads"] = std::to_string(model.n_heads);
    kv["model.mlp_ratio"] = std::to_string(model.mlp_ratio);
    kv["model.vocab"] = std::to_string(model.vocab);
    kv["model.n_classes"] = std::to_string(model.n_classes);
    kv["model.s_max"] = std::to_string(model.s_max);
    kv["model.rope_base"] = fmt_float(model.rope_base);
    kv["model.fusion_mode"] = fusion_mode_name(fusion.mode);
    kv["model.fusion_layers"] =
        fusion.fusion_layers.empty() ? "auto" : fmt_layers(fusion.fusion_layers);
    kv["model.alpha_pre_projection"] = fusion.alpha_pre_projection ? "true" : "false";
    kv["encoder.d_e"] = std::to_string(encoder.d_e);
    kv["encoder.n_layers"] = std::to_string(encoder.n_layers);
    kv["encoder.n_heads"] = std::to_string(encoder.n_heads);
    kv["encoder.mlp_ratio"] = std::to_string(encoder.mlp_ratio);
    kv["encoder.in_channels"] = std::to_string(encoder.in_channels);
    kv["train.lr"] = fmt_float(train.lr);
    kv["train.warmup"] = std::to_string(train.warmup);
    kv["train.weight_decay"] = fmt_float(train.weight_decay);
    kv["train.batch"] = std::to_string(train.batch);
    kv["train.steps"] = std::to_string(train.steps);
    kv["train.fusion_dropout"] = fmt_float(train.fusion_dropout);
    kv["train.regime"] = train_regime_name(train.regime);
    kv["train.resolutions"] = fmt_resolutions(train.resolutions);
    kv["train.t_max"] = std::to_string(train.t_max);
    kv["train.cadence"] = std::to_string(train.cadence);
    kv["train.heldout"] = std::to_string(train.heldout);
    kv["train.seed"] = std::to_string(train.seed);
    kv["sample.temperature"] = fmt_float(sample.temperature);
    kv["sample.top_k"] = std::to_string(sample.top_k);
    kv["sample.seed"] = std::to_string(sample.seed);
    kv["sample.alpha"] = fmt_float(sample.alpha);
    kv["sample.cfg_scale"] = fmt_float(sample.cfg_scale);
    kv["data.control"] = control_kind_name(control);
    std::string out;
    for (const auto& [k, v] : kv) out += k + " = " + v + "\n";
    return out;
}

void RunConfig::validate() const {
    model.validate();
    encoder.validate();
    fusion.validate(model.n_layers);
    sample.validate(model.vocab);
    train.validate();
    if (model.d_e != encoder.d_e)
        throw ConfigError("decoder control width must match encoder.d_e");
}

}  // namespace carc
