#pragma once

#include <string>
#include <vector>

#include "carc/image.hpp"
#include "carc/palette.hpp"
#include "carc/rng.hpp"

namespace carc {

constexpr int kNumClasses = 3;
constexpr int kMaxShapes = 3;

enum class ShapeKind { circle = 0, rectangle = 1, triangle = 2 };

const char* shape_kind_name(ShapeKind k);

// Geometry in pixel units around (cx, cy). circle: a = radius. rectangle:
// a/b = half width/height. triangle (isoceles, apex up): a = half base,
// b = height of the bounding box.
struct Shape {
    ShapeKind kind = ShapeKind::circle;
    int color = 0;  // palette id
    double cx = 0, cy = 0, a = 0, b = 0;

    bool contains(double x, double y) const;
    double area() const;
};

// Shapes are listed back-to-front; shape i has z-order i+1 and segmentation
// id i+1. Class id is the kind of the largest-area shape.
struct Scene {
    int h = 0, w = 0;
    int background = 0;  // palette id
    std::vector<Shape> shapes;
};

struct Sample {
    std::string id;
    int class_id = 0;
    Raster image;  // h x w x 3
    Raster edge;   // binary {0,255}
    Raster seg;    // ids in [0, kMaxShapes]
    Raster depth;  // z-order plateaus, background 0
};

Raster rasterize_image(const Scene& scene, const Palette& pal);
Raster rasterize_seg(const Scene& scene);

// 255 where the segmentation id differs from any 4-neighbor (both sides of
// every region boundary), else 0.
Raster derive_edge(const Raster& seg);

// Plateau z of n_shapes maps to round(255*z/n_shapes); background stays 0.
Raster derive_depth(const Raster& seg, int n_shapes);

// Random scene: 1-3 shapes on a uniform background, all colors distinct
// palette entries. The class is drawn uniformly first and realized as
// shape[0] with a strictly dominant area, so classes balance exactly.
Scene synth_scene_geometry(Rng& rng, int h, int w);
Sample synth_scene(Rng& rng, int h, int w);

// manifest.txt: a comment header, then one line per sample:
// `id class H W image.ppm edge.pgm seg.pgm depth.pgm` (paths relative to dir).
std::string write_manifest(const std::vector<Sample>& samples, const std::string& dir);
std::vector<Sample> read_manifest(const std::string& dir);

}  // namespace carc
