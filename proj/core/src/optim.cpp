#include "carc/optim.hpp"

#include <cmath>

#include "carc/error.hpp"

namespace carc {

AdamW::AdamW(std::vector<Tensor> params, AdamWConfig cfg) : params_(std::move(params)), cfg_(cfg) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const Tensor& p : params_) {
        if (!p.requires_grad()) throw ConfigError("AdamW: parameter without requires_grad");
        m_.emplace_back(p.numel(), 0.0f);
        v_.emplace_back(p.numel(), 0.0f);
    }
}

float AdamW::current_lr() const {
    if (cfg_.warmup_steps > 0 && step_count_ < cfg_.warmup_steps) {
        return cfg_.lr * static_cast<float>(step_count_ + 1) / static_cast<float>(cfg_.warmup_steps);
    }
    return cfg_.lr;
}

void AdamW::step() {
    const double lr = current_lr();
    ++step_count_;
    const double b1 = cfg_.beta1, b2 = cfg_.beta2;
    const double bc1 = 1.0 - std::pow(b1, static_cast<double>(step_count_));
    const double bc2 = 1.0 - std::pow(b2, static_cast<double>(step_count_));
    for (size_t pi = 0; pi < params_.size(); ++pi) {
        Tensor& p = params_[pi];
        float* w = p.data();
        const float* g = p.grad();
        float* m = m_[pi].data();
        float* v = v_[pi].data();
        const int64_t n = p.numel();
        for (int64_t i = 0; i < n; ++i) {
            const double gi = g[i];
            const double mi = b1 * m[i] + (1.0 - b1) * gi;
            const double vi = b2 * v[i] + (1.0 - b2) * gi * gi;
            m[i] = static_cast<float>(mi);
            v[i] = static_cast<float>(vi);
            const double mhat = mi / bc1;
            const double vhat = vi / bc2;
            double wi = w[i];
            wi -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) + cfg_.weight_decay * wi);
            w[i] = static_cast<float>(wi);
        }
    }
}

void AdamW::zero_grad() {
    for (Tensor& p : params_) p.zero_grad();
}

}  // namespace carc
