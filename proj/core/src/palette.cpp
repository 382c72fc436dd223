#include "carc/palette.hpp"

#include <sstream>

namespace carc {

Palette default_palette() {
    static const uint8_t levels[4] = {0, 85, 170, 255};
    Palette p;
    p.colors.reserve(64);
    for (uint8_t r : levels) {
        for (uint8_t g : levels) {
            for (uint8_t b : levels) p.colors.push_back({r, g, b});
        }
    }
    return p;
}

TokenGrid encode_image(const Raster& img, const Palette& pal) {
    if (img.channels != 3) throw ShapeError("encode_image: raster must have 3 channels");
    if (img.h % kPatch != 0 || img.w % kPatch != 0) {
        throw ShapeError("encode_image: dims " + std::to_string(img.h) + "x" + std::to_string(img.w) +
                         " not multiples of " + std::to_string(kPatch));
    }
    TokenGrid grid;
    grid.rows = img.h / kPatch;
    grid.cols = img.w / kPatch;
    grid.tokens.reserve(static_cast<size_t>(grid.rows) * grid.cols);
    for (int gr = 0; gr < grid.rows; ++gr) {
        for (int gc = 0; gc < grid.cols; ++gc) {
            double sum[3] = {0, 0, 0};
            for (int y = 0; y < kPatch; ++y) {
                for (int x = 0; x < kPatch; ++x) {
                    for (int c = 0; c < 3; ++c) {
                        sum[c] += img.at(gr * kPatch + y, gc * kPatch + x, c);
                    }
                }
            }
            double mean[3];
            for (int c = 0; c < 3; ++c) mean[c] = sum[c] / (kPatch * kPatch);
            int best = 0;
            double best_d = 1e18;
            for (int i = 0; i < pal.size(); ++i) {
                double d = 0.0;
                for (int c = 0; c < 3; ++c) {
                    const double e = mean[c] - pal.colors[static_cast<size_t>(i)][static_cast<size_t>(c)];
                    d += e * e;
                }
                if (d < best_d) {
                    best_d = d;
                    best = i;
                }
            }
            grid.tokens.push_back(best);
        }
    }
    return grid;
}

Raster decode_tokens(const TokenGrid& grid, const Palette& pal) {
    if (grid.rows < 1 || grid.cols < 1 ||
        static_cast<int64_t>(grid.tokens.size()) != static_cast<int64_t>(grid.rows) * grid.cols) {
        throw ShapeError("decode_tokens: inconsistent grid " + std::to_string(grid.rows) + "x" +
                         std::to_string(grid.cols) + " with " + std::to_string(grid.tokens.size()) +
                         " tokens");
    }
    Raster img(grid.rows * kPatch, grid.cols * kPatch, 3);
    for (int gr = 0; gr < grid.rows; ++gr) {
        for (int gc = 0; gc < grid.cols; ++gc) {
            const int id = grid.tokens[static_cast<size_t>(gr) * grid.cols + gc];
            if (id < 0 || id >= pal.size()) {
                throw IndexError("decode_tokens: id " + std::to_string(id) + " outside vocabulary [0," +
                                 std::to_string(pal.size()) + ")");
            }
            const auto& col = pal.colors[static_cast<size_t>(id)];
            for (int y = 0; y < kPatch; ++y) {
                for (int x = 0; x < kPatch; ++x) {
                    for (int c = 0; c < 3; ++c) img.at(gr * kPatch + y, gc * kPatch + x, c) = col[static_cast<size_t>(c)];
                }
            }
        }
    }
    return img;
}

std::string grid_to_text(const TokenGrid& grid) {
    std::ostringstream os;
    os << grid.rows << " " << grid.cols;
    for (int t : grid.tokens) os << " " << t;
    return os.str();
}

TokenGrid grid_from_text(const std::string& line) {
    std::istringstream is(line);
    TokenGrid grid;
    if (!(is >> grid.rows >> grid.cols) || grid.rows < 1 || grid.cols < 1) {
        throw IoError("token grid: malformed header in \"" + line.substr(0, 32) + "\"");
    }
    const int64_t n = static_cast<int64_t>(grid.rows) * grid.cols;
    grid.tokens.reserve(static_cast<size_t>(n));
    int id;
    while (is >> id) grid.tokens.push_back(id);
    if (static_cast<int64_t>(grid.tokens.size()) != n) {
        throw IoError("token grid: expected " + std::to_string(n) + " ids, got " +
                      std::to_string(grid.tokens.size()));
    }
    return grid;
}

}  // namespace carc
