#pragma once

#include <array>
#include <string>
#include <vector>

#include "carc/image.hpp"

namespace carc {

// Deterministic vector-quantizer codec: a fixed palette plays the codebook,
// 16x16 blocks play the patches. encode(decode(g)) == g exactly because
// palette colors quantize to themselves under lowest-index tie-breaking.
struct Palette {
    std::vector<std::array<uint8_t, 3>> colors;
    int size() const { return static_cast<int>(colors.size()); }
};

// 64 entries: the 4-level RGB cube {0,85,170,255}^3, r-major then g then b.
constexpr int kVocabSize = 64;
Palette default_palette();

struct TokenGrid {
    int rows = 0;
    int cols = 0;
    std::vector<int> tokens;  // row-major, ids in [0, K)

    int64_t count() const { return static_cast<int64_t>(tokens.size()); }
    bool operator==(const TokenGrid& o) const = default;
};

constexpr int kPatch = 16;

// Mean-pool each 16x16 block, assign the nearest palette color by squared
// distance (ties to the lowest index). H and W must be multiples of 16.
TokenGrid encode_image(const Raster& img, const Palette& pal);

// Paint each token as a solid 16x16 block.
Raster decode_tokens(const TokenGrid& grid, const Palette& pal);

// Text form: "rows cols id id id ...", one grid per line.
std::string grid_to_text(const TokenGrid& grid);
TokenGrid grid_from_text(const std::string& line);

}  // namespace carc
