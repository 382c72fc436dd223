#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "carc/tensor.hpp"

namespace carc {

struct AdamWConfig {
    float lr = 1e-3f;
    float beta1 = 0.9f;
    float beta2 = 0.95f;
    float eps = 1e-8f;
    float weight_decay = 0.05f;
    int warmup_steps = 100;
};

// Decoupled-weight-decay Adam over a fixed parameter list. Moments are
// float32, the per-coordinate update math runs in float64. Step count and
// moment buffers round-trip through checkpoints.
class AdamW {
  public:
    AdamW(std::vector<Tensor> params, AdamWConfig cfg);

    // Applies one update from the gradients currently stored on the params.
    void step();
    void zero_grad();

    // Linear warmup from 0 over cfg.warmup_steps, then constant cfg.lr.
    float current_lr() const;

    int64_t step_count() const { return step_count_; }
    const AdamWConfig& config() const { return cfg_; }
    const std::vector<Tensor>& params() const { return params_; }

    // Checkpoint plumbing: moment buffers in parameter order (m then v per
    // param), plus the step counter.
    std::vector<std::vector<float>>& moments_m() { return m_; }
    std::vector<std::vector<float>>& moments_v() { return v_; }
    void set_step_count(int64_t s) { step_count_ = s; }

  private:
    std::vector<Tensor> params_;
    AdamWConfig cfg_;
    std::vector<std::vector<float>> m_;
    std::vector<std::vector<float>> v_;
    int64_t step_count_ = 0;
};

}  // namespace carc
