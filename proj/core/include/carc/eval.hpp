#pragma once

#include <string>
#include <vector>

#include "carc/model.hpp"
#include "carc/sampler.hpp"
#include "carc/synth.hpp"

namespace carc {

struct EvalReport {
    int n = 0;
    double edge_f1 = 0;    // generated vs reference block edges
    double edge_ssim = 0;  // same rasters, grayscale SSIM
    double edge_miou = 0;  // edge/background as a 2-class map
    double image_rmse = 0;
    double frechet = 0;  // generated set vs quantized-reference set

    std::string to_line() const;
};

// Generates one grid per held-out sample (control encoded from the sample,
// seed varied per index) and compares block-level edges against the
// palette-quantized ground truth, so a perfect model scores F1 = 1.
EvalReport evaluate(const Model& m, const std::vector<Sample>& samples, ControlKind kind,
                    const SamplingParams& params, int n_max);

}  // namespace carc
