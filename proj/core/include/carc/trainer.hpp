#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "carc/checkpoint.hpp"
#include "carc/config.hpp"
#include "carc/model.hpp"
#include "carc/optim.hpp"
#include "carc/synth.hpp"

namespace carc {

struct TrainItem {
    TokenGrid tokens;
    int class_id = 0;
    ControlImage control;
};

ControlImage control_from_sample(const Sample& s, ControlKind kind);
TrainItem make_train_item(const Sample& s, ControlKind kind, const Palette& pal);

// Uniform draw over the configured resolutions whose sequences fit the token
// cap and the decoder context (prefill needs twice the tokens). ConfigError
// when nothing fits.
std::pair<int, int> sample_resolution(const TrainConfig& cfg, FusionMode mode, int s_max,
                                      Rng& rng);

struct StepStats {
    float loss = 0.0f;
    float lr = 0.0f;
    int dropped = 0;  // samples that took the unconditional path
};

// One optimizer update over a batch. Each item flips an all-or-nothing
// dropout coin: heads runs the plain unconditional forward, so the model
// keeps a usable alpha=0 path. The coin is drawn per item regardless of
// dropout_p, keeping the rng counter advance deterministic.
StepStats train_step(Model& m, const std::vector<TrainItem>& batch, float dropout_p, AdamW& opt,
                     Rng& rng);

// Teacher-forced mean cross-entropy with controls always on (no dropout).
double heldout_ce(const Model& m, const std::vector<TrainItem>& items);

// Deterministic training loop: buckets samples by resolution, reserves the
// trailing cfg.train.heldout samples for cadence metrics, logs one line per
// cadence (`step loss heldout_ce=... lr=...`) and checkpoints alongside.
// `resume_from` restores weights, optimizer moments, and the loop rng, then
// continues to cfg.train.steps; the continuation is bitwise identical to an
// uninterrupted run. Throws NumericError naming the step if the loss leaves
// the finite range.
Model run_training(const RunConfig& cfg, const std::vector<Sample>& data,
                   const std::string& ckpt_out, std::ostream* log,
                   const std::string& resume_from = "");

}  // namespace carc
