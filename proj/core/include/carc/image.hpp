#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "carc/error.hpp"

namespace carc {

// 8-bit raster, row-major, channel-last. channels is 1 (gray) or 3 (rgb).
struct Raster {
    int h = 0;
    int w = 0;
    int channels = 0;
    std::vector<uint8_t> pix;

    Raster() = default;
    Raster(int h_, int w_, int channels_, uint8_t fill = 0);

    uint8_t& at(int y, int x, int c = 0) {
        return pix[(static_cast<size_t>(y) * w + x) * channels + c];
    }
    uint8_t at(int y, int x, int c = 0) const {
        return pix[(static_cast<size_t>(y) * w + x) * channels + c];
    }
    bool same_shape(const Raster& o) const {
        return h == o.h && w == o.w && channels == o.channels;
    }
};

// Binary netpbm: P6 for 3-channel (maxval 255), P5 for single-channel with a
// caller-chosen maxval (segmentation maps use small maxvals). Readers accept
// comments and any maxval <= 255.
void write_ppm(const std::string& path, const Raster& img);
void write_pgm(const std::string& path, const Raster& img, int maxval = 255);
Raster read_image(const std::string& path);  // dispatches on magic
Raster read_image(const std::string& path, int& maxval_out);

}  // namespace carc
