#pragma once

#include <array>
#include <vector>

#include "carc/image.hpp"

namespace carc {

// Binary edge F1: any non-zero byte counts as positive. Two empty rasters
// agree perfectly and score 1.
double f1_edge(const Raster& pred, const Raster& ref);

// Root mean squared error over raw byte values (all channels).
double rmse(const Raster& a, const Raster& b);

// Mean SSIM over all 8x8 sliding windows of two single-channel rasters,
// uniform window, C1=(0.01*255)^2, C2=(0.03*255)^2.
double ssim(const Raster& a, const Raster& b);

// Mean IoU over the classes present in ref; pixel values are class ids.
double miou(const Raster& pred, const Raster& ref, int n_classes);

// 255 where any channel differs from a 4-neighbor, else 0. Applied to
// decoded token grids this recovers block-boundary edges.
Raster edges_from_raster(const Raster& img);

// Cyclic Jacobi eigensolver for a symmetric n x n matrix (row-major).
// Returns eigenvalues ascending; evecs stores eigenvectors as columns.
void jacobi_eig(std::vector<double> m, int n, std::vector<double>& evals,
                std::vector<double>& evecs);

constexpr int kFrechetDim = 7;

// [mean R, mean G, mean B, std of gray, edge density,
//  mean and std of 4x4-pooled luminance]
std::array<double, kFrechetDim> frechet_features(const Raster& img);

// Frechet distance (squared form) between Gaussians fitted to two feature
// sets; covariances get +1e-6*I. Needs at least 2 vectors per set.
double frechet_from_features(const std::vector<std::array<double, kFrechetDim>>& a,
                             const std::vector<std::array<double, kFrechetDim>>& b);

double frechet_surrogate(const std::vector<Raster>& a, const std::vector<Raster>& b);

}  // namespace carc
