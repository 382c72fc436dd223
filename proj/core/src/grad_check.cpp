#include "carc/grad_check.hpp"

#include <algorithm>
#include <cmath>

namespace carc {

GradCheckResult grad_check(const std::function<Tensor()>& loss_fn,
                           const std::vector<std::pair<std::string, Tensor>>& params, Rng& rng,
                           int max_coords_per_tensor, double eps) {
    // Analytic pass.
    for (auto& [name, p] : params) {
        Tensor t = p;
        t.zero_grad();
    }
    Tensor loss = loss_fn();
    loss.backward();
    std::vector<std::vector<float>> analytic;
    analytic.reserve(params.size());
    for (auto& [name, p] : params) {
        analytic.emplace_back(p.grad(), p.grad() + p.numel());
    }

    GradCheckResult res;
    for (size_t pi = 0; pi < params.size(); ++pi) {
        Tensor p = params[pi].second;
        const int64_t n = p.numel();
        std::vector<int64_t> coords;
        if (n <= max_coords_per_tensor) {
            coords.resize(static_cast<size_t>(n));
            for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
        } else {
            for (int i = 0; i < max_coords_per_tensor; ++i) {
                coords.push_back(static_cast<int64_t>(rng.next_below(static_cast<uint64_t>(n))));
            }
        }
        for (int64_t ci : coords) {
            float* w = p.data() + ci;
            const float orig = *w;
            const double h = eps * (std::abs(static_cast<double>(orig)) + 1.0);
            *w = static_cast<float>(orig + h);
            const double lp = static_cast<double>(loss_fn().item());
            *w = static_cast<float>(orig - h);
            const double lm = static_cast<double>(loss_fn().item());
            *w = orig;
            const double fd = (lp - lm) / (2.0 * h);
            const double ad = analytic[pi][static_cast<size_t>(ci)];
            const double denom = std::max({std::abs(ad), std::abs(fd), 1.0});
            const double rel = std::abs(ad - fd) / denom;
            ++res.checked;
            if (rel > res.max_rel_err) {
                res.max_rel_err = rel;
                res.worst = params[pi].first + "[" + std::to_string(ci) + "] ad=" + std::to_string(ad) +
                            " fd=" + std::to_string(fd);
            }
        }
    }
    return res;
}

}  // namespace carc
