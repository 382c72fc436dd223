#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "carc/config.hpp"
#include "carc/model.hpp"
#include "carc/optim.hpp"

namespace carc {

// Binary layout (little-endian): "CARC" magic, u32 version, config text
// blob, tensor table (name, dims, f32 data), rng triple, then an optional
// optimizer section (step count + f32 moment pairs in parameter order).
// Serialization is order-stable, so save(load(p)) reproduces p byte for byte.
constexpr uint32_t kCheckpointVersion = 1;

struct TensorBlob {
    std::string name;
    std::vector<int> shape;
    std::vector<float> data;
};

struct RngState {
    uint64_t seed = 0, stream = 0, counter = 0;
};

struct OptimEntry {
    std::string name;
    std::vector<float> m, v;
};

struct Checkpoint {
    uint32_t version = kCheckpointVersion;
    std::string config_text;
    std::vector<TensorBlob> tensors;
    RngState rng;
    bool has_optim = false;
    int64_t optim_step = 0;
    std::vector<OptimEntry> optim;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);

// Rejects wrong magic and, naming both versions, any version mismatch.
Checkpoint load_checkpoint(const std::string& path);

// Snapshot of a live model (and optionally its optimizer, whose entries are
// the trainable parameters for the config's regime).
Checkpoint snapshot_model(const Model& m, const RunConfig& cfg, RngState rng,
                          const AdamW* opt = nullptr);

// Rebuilds the model a checkpoint describes. Every stored tensor must match
// a model parameter by name and shape, and cover all of them.
Model model_from_checkpoint(const Checkpoint& ckpt, RunConfig& cfg_out);

// Restores optimizer moments and step count; the optimizer must have been
// built over the same trainable set.
void load_optim_state(const Checkpoint& ckpt, const std::vector<std::string>& param_names,
                      AdamW& opt);

}  // namespace carc
