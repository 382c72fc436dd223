#include "carc/image.hpp"

#include <cctype>
#include <fstream>

namespace carc {

Raster::Raster(int h_, int w_, int channels_, uint8_t fill) : h(h_), w(w_), channels(channels_) {
    if (h < 1 || w < 1 || (channels != 1 && channels != 3)) {
        throw ShapeError("raster: bad dims " + std::to_string(h) + "x" + std::to_string(w) + "x" +
                         std::to_string(channels));
    }
    pix.assign(static_cast<size_t>(h) * w * channels, fill);
}

namespace {

void put_header(std::ofstream& f, const char* magic, int w, int h, int maxval) {
    f << magic << "\n" << w << " " << h << "\n" << maxval << "\n";
}

// Reads one whitespace/comment-delimited unsigned integer from a netpbm header.
int read_pnm_int(std::istream& f, const std::string& path) {
    int c = f.get();
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#') {
            while (c != EOF && c != '\n') c = f.get();
        }
        c = f.get();
    }
    if (c == EOF || !std::isdigit(c)) throw IoError(path + ": malformed netpbm header");
    int v = 0;
    while (c != EOF && std::isdigit(c)) {
        v = v * 10 + (c - '0');
        if (v > 1 << 24) throw IoError(path + ": header value out of range");
        c = f.get();
    }
    return v;
}

}  // namespace

void write_ppm(const std::string& path, const Raster& img) {
    if (img.channels != 3) throw ShapeError("write_ppm: raster must have 3 channels");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    put_header(f, "P6", img.w, img.h, 255);
    f.write(reinterpret_cast<const char*>(img.pix.data()), static_cast<std::streamsize>(img.pix.size()));
    if (!f) throw IoError("write failed: " + path);
}

void write_pgm(const std::string& path, const Raster& img, int maxval) {
    if (img.channels != 1) throw ShapeError("write_pgm: raster must have 1 channel");
    if (maxval < 1 || maxval > 255) throw ConfigError("write_pgm: maxval must be in [1,255]");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open for write: " + path);
    put_header(f, "P5", img.w, img.h, maxval);
    f.write(reinterpret_cast<const char*>(img.pix.data()), static_cast<std::streamsize>(img.pix.size()));
    if (!f) throw IoError("write failed: " + path);
}

Raster read_image(const std::string& path) {
    int maxval = 0;
    return read_image(path, maxval);
}

Raster read_image(const std::string& path, int& maxval_out) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open: " + path);
    char m0 = 0, m1 = 0;
    f.get(m0).get(m1);
    int channels;
    if (m0 == 'P' && m1 == '6') {
        channels = 3;
    } else if (m0 == 'P' && m1 == '5') {
        channels = 1;
    } else {
        throw IoError(path + ": not a binary PPM/PGM");
    }
    const int w = read_pnm_int(f, path);
    const int h = read_pnm_int(f, path);
    const int maxval = read_pnm_int(f, path);
    if (maxval < 1 || maxval > 255) throw IoError(path + ": unsupported maxval " + std::to_string(maxval));
    // Exactly one whitespace byte separates the header from the pixel block;
    // read_pnm_int already consumed it as the digit terminator.
    Raster img(h, w, channels);
    f.read(reinterpret_cast<char*>(img.pix.data()), static_cast<std::streamsize>(img.pix.size()));
    if (f.gcount() != static_cast<std::streamsize>(img.pix.size())) {
        throw IoError(path + ": truncated pixel data");
    }
    maxval_out = maxval;
    return img;
}

}  // namespace carc
