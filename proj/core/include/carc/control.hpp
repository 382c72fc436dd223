#pragma once

#include <string>
#include <utility>
#include <vector>

#include "carc/image.hpp"
#include "carc/rng.hpp"
#include "carc/tensor.hpp"

namespace carc {

enum class ControlKind { edge, segmentation, depth, resolution_map };

std::string control_kind_name(ControlKind k);
ControlKind control_kind_from_string(const std::string& s);

// A conditioning raster. maxval is the encoding ceiling used to scale pixel
// values into [0,1] (255 for edge/depth/resolution maps, the id ceiling for
// segmentation maps).
struct ControlImage {
    ControlKind kind = ControlKind::edge;
    Raster raster;
    int maxval = 255;
};

// Checks the per-kind invariants: dims multiples of 16, single channel for
// edge/depth/segmentation/resolution maps, edge rasters binary {0, maxval}.
void validate_control(const ControlImage& img);

struct ControlTokens {
    int source_rows = 0;
    int source_cols = 0;
    Tensor data;  // [L x d]

    int length() const { return source_rows * source_cols; }
};

struct EncoderConfig {
    int d_e = 128;
    int n_layers = 2;
    int n_heads = 4;
    int mlp_ratio = 4;
    int in_channels = 1;

    int patch_dim() const;
    void validate() const;
};

// Flattens 16x16 patches in row-major order, channel-last within a patch,
// scaled to [0,1] by the image's maxval. Output is [L x patch_dim].
Tensor patchify(const ControlImage& img);

// 2-D sinusoidal position table for an (rows x cols) grid: the first half of
// each vector encodes the row index, the second half the column index.
Tensor sinusoidal_pe_2d(int rows, int cols, int d);

struct EncoderLayer {
    Tensor attn_norm_w, wqkv, wo, mlp_norm_w, w1, w2;
};

// ViT-style bidirectional encoder: patch embed + 2-D sinusoidal positions,
// then n_layers pre-norm attention blocks. No class token, no final norm, so
// n_layers = 0 degenerates to exactly embed + positions.
struct Encoder {
    EncoderConfig cfg;
    Tensor patch_w;  // [patch_dim x d_e]
    Tensor patch_b;  // [d_e]
    std::vector<EncoderLayer> layers;

    static Encoder init(const EncoderConfig& cfg, Rng& rng);

    // Tape-recorded when weights require grad. Throws ConfigError when the
    // image's channel count disagrees with the weights.
    Tensor forward(const ControlImage& img) const;

    ControlTokens encode(const ControlImage& img) const;

    void collect_params(std::vector<std::pair<std::string, Tensor>>& out) const;
};

// Grayscale gradient of 16x16 constant squares: grid column j of C columns
// has value round(255 * (1 - j/(C-1))), i.e. 255 at the left edge, 0 at the
// right (255 everywhere when C = 1). Drives aspect-ratio prompting.
ControlImage resolution_map(int h, int w);

}  // namespace carc
