#pragma once

#include <functional>
#include <string>
#include <vector>

#include "carc/rng.hpp"
#include "carc/tensor.hpp"

namespace carc {

struct GradCheckResult {
    double max_rel_err = 0.0;
    int checked = 0;
    std::string worst;  // "name[i] ad=.. fd=.."
    bool ok(double tol) const { return max_rel_err <= tol; }
};

// Central-difference check of analytic gradients. `loss_fn` must rebuild the
// graph from the current parameter values and return a scalar loss. Per-coord
// step is eps*(|p|+1); the relative error uses a unit floor in the
// denominator because float32 forward noise makes tiny finite differences
// meaningless.
GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& params, Rng& rng,
                           int max_coords_per_tensor = 256, double eps = 1e-3);

}  // namespace carc
