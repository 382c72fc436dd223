#pragma once

#include <string>
#include <utility>
#include <vector>

#include "carc/config.hpp"
#include "carc/control.hpp"
#include "carc/decoder.hpp"

namespace carc {

// Control encoder + decoder pair built from one RunConfig. Parameter names
// are stable: decoder first, then the encoder under "enc.".
struct Model {
    Encoder enc;
    Decoder dec;
    FusionSpec fusion;

    static Model init(const RunConfig& cfg, uint64_t seed);

    std::vector<std::pair<std::string, Tensor>> named_params() const;
    int64_t param_count() const;
};

// The freeze regime trains only the control path: encoder weights, fusion
// projections / cross-attention blocks, and the prefill projection.
bool is_control_param(const std::string& name);

// Flags requires_grad per the regime and returns the trainable tensors in
// named order. Frozen tensors drop their grad buffers, so the optimizer and
// the backward sweep cannot touch them.
std::vector<Tensor> set_trainable(Model& m, TrainRegime regime);

}  // namespace carc
