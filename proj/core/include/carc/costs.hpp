#pragma once

#include <cstdint>
#include <vector>

#include "carc/config.hpp"
#include "carc/decoder.hpp"

namespace carc {

// Analytic per-forward FLOP counts for one sample. The attended length is n
// for the decoding modes and L+n for prefill; the class token is left out so
// the headline ratios stay exact. Encoder cost is excluded (identical across
// modes).
struct FlopsBreakdown {
    double attn_score = 0;  // 2 * layers * heads * s^2 * d_head
    double attn_value = 0;
    double linear = 0;  // qkv/out/mlp projections + lm head on n rows
    double fusion = 0;  // control projections (and cross-attention blocks)

    double total() const { return attn_score + attn_value + linear + fusion; }
};

FlopsBreakdown flops_estimate(const DecoderConfig& cfg, const FusionSpec& spec, int64_t L,
                              int64_t n);

// Analytic training-state bytes: parameters, grads, both Adam moments, plus
// per-layer activations for a batch at attended length s.
int64_t footprint_bytes(int64_t n_params, const DecoderConfig& cfg, FusionMode mode, int64_t L,
                        int64_t n, int batch);

struct LatencyReport {
    std::vector<double> trial_ms;
    double median_ms = 0;
};

// Wall-clock for full train steps (forward, backward, optimizer) on random
// data at a rows x cols token grid, one unmeasured warmup step first.
LatencyReport measure_train_step(const RunConfig& cfg, int rows, int cols, int trials,
                                 uint64_t seed);

}  // namespace carc
