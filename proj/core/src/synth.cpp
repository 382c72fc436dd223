#include "carc/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>

#include "carc/error.hpp"

namespace carc {

namespace fs = std::filesystem;

const char* shape_kind_name(ShapeKind k) {
    switch (k) {
        case ShapeKind::circle: return "circle";
        case ShapeKind::rectangle: return "rectangle";
        case ShapeKind::triangle: return "triangle";
    }
    return "?";
}

bool Shape::contains(double x, double y) const {
    double dx = x - cx, dy = y - cy;
    switch (kind) {
        case ShapeKind::circle:
            return dx * dx + dy * dy <= a * a;
        case ShapeKind::rectangle:
            return std::abs(dx) <= a && std::abs(dy) <= b;
        case ShapeKind::triangle: {
            // apex at (cx, cy - b/2), base along y = cy + b/2
            double down = dy + b / 2.0;  // distance below the apex
            if (down < 0 || down > b) return false;
            return std::abs(dx) <= a * (down / b);
        }
    }
    return false;
}

double Shape::area() const {
    switch (kind) {
        case ShapeKind::circle: return 3.14159265358979323846 * a * a;
        case ShapeKind::rectangle: return 4.0 * a * b;
        case ShapeKind::triangle: return a * b;  // (2a * b) / 2
    }
    return 0.0;
}

Raster rasterize_image(const Scene& scene, const Palette& pal) {
    Raster out(scene.h, scene.w, 3);
    for (int y = 0; y < scene.h; ++y)
        for (int x = 0; x < scene.w; ++x) {
            int color = scene.background;
            for (int i = static_cast<int>(scene.shapes.size()) - 1; i >= 0; --i)
                if (scene.shapes[i].contains(x + 0.5, y + 0.5)) {
                    color = scene.shapes[i].color;
                    break;
                }
            const auto& c = pal.colors.at(color);
            out.at(y, x, 0) = c[0];
            out.at(y, x, 1) = c[1];
            out.at(y, x, 2) = c[2];
        }
    return out;
}

Raster rasterize_seg(const Scene& scene) {
    Raster out(scene.h, scene.w, 1);
    for (int y = 0; y < scene.h; ++y)
        for (int x = 0; x < scene.w; ++x) {
            uint8_t id = 0;
            for (int i = static_cast<int>(scene.shapes.size()) - 1; i >= 0; --i)
                if (scene.shapes[i].contains(x + 0.5, y + 0.5)) {
                    id = static_cast<uint8_t>(i + 1);
                    break;
                }
            out.at(y, x, 0) = id;
        }
    return out;
}

Raster derive_edge(const Raster& seg) {
    if (seg.channels != 1) throw ShapeError("derive_edge expects a single-channel raster");
    Raster out(seg.h, seg.w, 1);
    for (int y = 0; y < seg.h; ++y)
        for (int x = 0; x < seg.w; ++x) {
            uint8_t v = seg.at(y, x, 0);
            bool hit = (y > 0 && seg.at(y - 1, x, 0) != v) ||
                       (y + 1 < seg.h && seg.at(y + 1, x, 0) != v) ||
                       (x > 0 && seg.at(y, x - 1, 0) != v) ||
                       (x + 1 < seg.w && seg.at(y, x + 1, 0) != v);
            out.at(y, x, 0) = hit ? 255 : 0;
        }
    return out;
}

Raster derive_depth(const Raster& seg, int n_shapes) {
    if (seg.channels != 1) throw ShapeError("derive_depth expects a single-channel raster");
    if (n_shapes < 0 || n_shapes > kMaxShapes)
        throw IndexError("derive_depth: shape count " + std::to_string(n_shapes) + " out of range");
    Raster out(seg.h, seg.w, 1);
    for (int y = 0; y < seg.h; ++y)
        for (int x = 0; x < seg.w; ++x) {
            int id = seg.at(y, x, 0);
            if (id > n_shapes)
                throw IndexError("derive_depth: segmentation id " + std::to_string(id) +
                                 " exceeds shape count " + std::to_string(n_shapes));
            out.at(y, x, 0) = id == 0 ? 0
                                      : static_cast<uint8_t>(std::lround(255.0 * id / n_shapes));
        }
    return out;
}

namespace {

double uniform_in(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * rng.next_double();
}

Shape make_shape(Rng& rng, ShapeKind kind, double target_area, int h, int w) {
    Shape s;
    s.kind = kind;
    switch (kind) {
        case ShapeKind::circle: {
            s.a = std::sqrt(target_area / 3.14159265358979323846);
            s.b = s.a;
            break;
        }
        case ShapeKind::rectangle: {
            double aspect = uniform_in(rng, 0.6, 1.6);
            s.a = std::sqrt(target_area * aspect) / 2.0;
            s.b = std::sqrt(target_area / aspect) / 2.0;
            break;
        }
        case ShapeKind::triangle: {
            double aspect = uniform_in(rng, 0.7, 1.4);
            s.a = std::sqrt(target_area * aspect);
            s.b = std::sqrt(target_area / aspect);
            break;
        }
    }
    // half extents of the bounding box
    double hx = s.a;
    double hy = (kind == ShapeKind::triangle) ? s.b / 2.0 : s.b;
    double margin = 1.0;
    s.cx = uniform_in(rng, hx + margin, w - hx - margin);
    s.cy = uniform_in(rng, hy + margin, h - hy - margin);
    return s;
}

}  // namespace

Scene synth_scene_geometry(Rng& rng, int h, int w) {
    if (h < 32 || w < 32) throw ConfigError("scene size must be at least 32x32");
    Scene scene;
    scene.h = h;
    scene.w = w;

    int class_id = static_cast<int>(rng.next_below(kNumClasses));
    int n_shapes = 1 + static_cast<int>(rng.next_below(kMaxShapes));

    // distinct palette colors for background + shapes
    std::vector<int> colors;
    while (static_cast<int>(colors.size()) < n_shapes + 1) {
        int c = static_cast<int>(rng.next_below(kVocabSize));
        if (std::find(colors.begin(), colors.end(), c) == colors.end()) colors.push_back(c);
    }
    scene.background = colors[0];

    double canvas = static_cast<double>(h) * w;
    double min_dim = std::min(h, w);
    double cap = 0.3 * (min_dim - 4.0) * (min_dim - 4.0);

    // the class shape is drawn first and keeps a strictly dominant area
    double a0 = std::min(uniform_in(rng, 0.10, 0.16) * canvas, cap);
    Shape lead = make_shape(rng, static_cast<ShapeKind>(class_id), a0, h, w);
    lead.color = colors[1];
    scene.shapes.push_back(lead);

    for (int i = 1; i < n_shapes; ++i) {
        auto kind = static_cast<ShapeKind>(rng.next_below(kNumClasses));
        double a = std::min(uniform_in(rng, 0.02, 0.07) * canvas, 0.6 * a0);
        Shape sh = make_shape(rng, kind, a, h, w);
        sh.color = colors[1 + i];
        scene.shapes.push_back(sh);
    }
    return scene;
}

Sample synth_scene(Rng& rng, int h, int w) {
    Scene scene = synth_scene_geometry(rng, h, w);
    Sample s;
    int largest = 0;
    for (size_t i = 1; i < scene.shapes.size(); ++i)
        if (scene.shapes[i].area() > scene.shapes[largest].area()) largest = static_cast<int>(i);
    s.class_id = static_cast<int>(scene.shapes[largest].kind);
    s.image = rasterize_image(scene, default_palette());
    s.seg = rasterize_seg(scene);
    s.edge = derive_edge(s.seg);
    s.depth = derive_depth(s.seg, static_cast<int>(scene.shapes.size()));
    return s;
}

std::string write_manifest(const std::vector<Sample>& samples, const std::string& dir) {
    fs::create_directories(dir);
    std::set<std::string> seen;
    for (const auto& s : samples) {
        if (s.id.empty()) throw ConfigError("sample id must not be empty");
        if (!seen.insert(s.id).second)
            throw ConfigError("duplicate sample id '" + s.id + "' in manifest");
    }
    std::string path = (fs::path(dir) / "manifest.txt").string();
    std::ofstream out(path);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out << "# id class H W image edge seg depth\n";
    for (const auto& s : samples) {
        std::string img = s.id + ".image.ppm";
        std::string edge = s.id + ".edge.pgm";
        std::string seg = s.id + ".seg.pgm";
        std::string depth = s.id + ".depth.pgm";
        write_ppm((fs::path(dir) / img).string(), s.image);
        write_pgm((fs::path(dir) / edge).string(), s.edge);
        write_pgm((fs::path(dir) / seg).string(), s.seg, kMaxShapes);
        write_pgm((fs::path(dir) / depth).string(), s.depth);
        out << s.id << ' ' << s.class_id << ' ' << s.image.h << ' ' << s.image.w << ' ' << img
            << ' ' << edge << ' ' << seg << ' ' << depth << '\n';
    }
    if (!out) throw IoError("failed writing " + path);
    return path;
}

std::vector<Sample> read_manifest(const std::string& dir) {
    std::string path = (fs::path(dir) / "manifest.txt").string();
    std::ifstream in(path);
    if (!in) throw IoError("cannot open " + path);
    std::vector<Sample> samples;
    std::set<std::string> seen;
    std::string line;
    int lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty() || line[0] == '#') continue;
        std::istringstream ls(line);
        Sample s;
        int h = 0, w = 0;
        std::string img, edge, seg, depth;
        if (!(ls >> s.id >> s.class_id >> h >> w >> img >> edge >> seg >> depth))
            throw IoError(path + ":" + std::to_string(lineno) + ": malformed manifest line");
        if (!seen.insert(s.id).second)
            throw IoError(path + ":" + std::to_string(lineno) + ": duplicate sample id '" +
                          s.id + "'");
        if (s.class_id < 0 || s.class_id >= kNumClasses)
            throw IoError(path + ":" + std::to_string(lineno) + ": class id " +
                          std::to_string(s.class_id) + " out of range");
        s.image = read_image((fs::path(dir) / img).string());
        s.edge = read_image((fs::path(dir) / edge).string());
        s.seg = read_image((fs::path(dir) / seg).string());
        s.depth = read_image((fs::path(dir) / depth).string());
        for (const Raster* r : {&s.image, &s.edge, &s.seg, &s.depth})
            if (r->h != h || r->w != w)
                throw IoError(path + ":" + std::to_string(lineno) +
                              ": raster size does not match manifest");
        samples.push_back(std::move(s));
    }
    return samples;
}

}  // namespace carc
