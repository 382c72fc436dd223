#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "carc/control.hpp"
#include "carc/decoder.hpp"
#include "carc/sampler.hpp"

namespace carc {

enum class TrainRegime { full, freeze_backbone };

std::string train_regime_name(TrainRegime r);
TrainRegime train_regime_from_string(const std::string& s);

struct TrainConfig {
    float lr = 3e-4f;
    int warmup = 100;
    float weight_decay = 0.05f;
    int batch = 8;
    int steps = 1000;
    float fusion_dropout = 0.5f;
    TrainRegime regime = TrainRegime::full;
    std::vector<std::pair<int, int>> resolutions = {{64, 64}};  // pixels, H x W
    int t_max = 64;    // per-sample token cap
    int cadence = 100;  // log + checkpoint every this many steps
    int heldout = 64;   // trailing manifest samples reserved for cadence metrics
    uint64_t seed = 0;

    void validate() const;
};

// Everything a run needs, parsed from flat `key = value` lines with dotted
// prefixes (model., encoder., train., sample., data.). Unknown keys are
// rejected by name. The decoder's control width always follows encoder.d_e.
struct RunConfig {
    DecoderConfig model;
    EncoderConfig encoder;
    FusionSpec fusion;  // alpha stays 1 here; sampling carries the live knob
    TrainConfig train;
    SamplingParams sample;
    ControlKind control = ControlKind::edge;

    static RunConfig from_text(const std::string& text);
    static RunConfig from_file(const std::string& path);

    // Applies `key=value` pairs on top (CLI overrides).
    void apply(const std::map<std::string, std::string>& overrides);

    // Resolved config, one sorted `key = value` per line; parses back to an
    // equivalent RunConfig.
    std::string to_text() const;

    void validate() const;
};

// Low-level line parser: trims, skips blanks and '#' comments, rejects
// duplicate keys and lines without '='.
std::map<std::string, std::string> parse_kv_text(const std::string& text);

}  // namespace carc
