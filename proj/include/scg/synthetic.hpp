#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "scg/tensor.hpp"

namespace scg {

enum class ShapeKind : std::uint8_t { Ellipse, Rectangle, Stroke };

// One primitive in pixel coordinates. Ellipses use (a, b) as the centre and
// (c, d) as radii; rectangles use corners (a, b)-(c, d); strokes run from
// (a, b) to (c, d) with half-width `thickness`.
struct Shape2D {
  ShapeKind kind = ShapeKind::Ellipse;
  double a = 0, b = 0, c = 0, d = 0;
  double thickness = 1.0;
  double shade = 1.0;  // brightness factor applied to the hue colour
};

struct Geometry {
  std::vector<Shape2D> shapes;  // painted in order, later shapes on top
};

struct SyntheticDomainSpec {
  std::size_t image_size = 32;
  std::size_t hue_classes = 8;
  std::size_t min_shapes = 2;
  std::size_t max_shapes = 4;
  std::uint64_t seed = 0;
};

struct SyntheticItem {
  Tensor photo;   // [3, S, S] in [-1, 1], shapes coloured by the hue class
  Tensor sketch;  // [1, S, S], -1 on shape boundaries, +1 elsewhere
  std::size_t attribute = 0;
  Geometry geometry;
};

Geometry random_geometry(const SyntheticDomainSpec& spec, std::uint64_t item_seed);

// Per-pixel index of the topmost shape (0 = background, i + 1 = shape i).
std::vector<std::uint16_t> label_map(const Geometry& g, std::size_t size);

Tensor render_photo(const Geometry& g, std::size_t attribute, const SyntheticDomainSpec& spec);
// Depends on the geometry only.
Tensor render_sketch(const Geometry& g, std::size_t size);

// Item i draws its geometry and its attribute from two independent streams
// derived from (spec.seed, i).
SyntheticItem make_synthetic_item(const SyntheticDomainSpec& spec, std::size_t index);
std::vector<SyntheticItem> gen_synthetic_domains(const SyntheticDomainSpec& spec, std::size_t count,
                                                 std::size_t first_index = 0);

// RGB in [0, 1] of hue class `attribute`.
std::array<double, 3> hue_color(std::size_t attribute, std::size_t classes);

// Luma-weighted grayscale [1, H, W] of a [3, H, W] image.
Tensor to_grayscale(const Tensor& rgb);

}  // namespace scg
