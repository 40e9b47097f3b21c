#include "scg/synthetic.hpp"

#include <algorithm>
#include <array>
#include <cmath>

#include "scg/error.hpp"
#include "scg/rng.hpp"

namespace scg {

Geometry random_geometry(const SyntheticDomainSpec& spec, std::uint64_t item_seed) {
  if (spec.image_size < 8) throw ConfigError("synthetic images must be at least 8 pixels wide");
  if (spec.min_shapes == 0 || spec.max_shapes < spec.min_shapes) throw ConfigError("bad synthetic shape counts");
  Rng rng(item_seed);
  const double s = static_cast<double>(spec.image_size);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> count(spec.min_shapes, spec.max_shapes);
  std::uniform_int_distribution<int> kind(0, 2);
  Geometry g;
  const std::size_t n = count(rng);
  for (std::size_t i = 0; i < n; ++i) {
    Shape2D sh;
    sh.kind = static_cast<ShapeKind>(kind(rng));
    sh.shade = 0.55 + 0.45 * u(rng);
    switch (sh.kind) {
      case ShapeKind::Ellipse:
        sh.a = s * (0.2 + 0.6 * u(rng));
        sh.b = s * (0.2 + 0.6 * u(rng));
        sh.c = s * (0.1 + 0.2 * u(rng));
        sh.d = s * (0.1 + 0.2 * u(rng));
        break;
      case ShapeKind::Rectangle: {
        const double x0 = s * 0.7 * u(rng), y0 = s * 0.7 * u(rng);
        sh.a = x0;
        sh.b = y0;
        sh.c = x0 + s * (0.15 + 0.3 * u(rng));
        sh.d = y0 + s * (0.15 + 0.3 * u(rng));
        break;
      }
      case ShapeKind::Stroke:
        sh.a = s * u(rng);
        sh.b = s * u(rng);
        sh.c = s * u(rng);
        sh.d = s * u(rng);
        sh.thickness = 1.0 + 1.5 * u(rng);
        break;
    }
    g.shapes.push_back(sh);
  }
  return g;
}

namespace {

bool covers(const Shape2D& sh, double x, double y) {
  switch (sh.kind) {
    case ShapeKind::Ellipse: {
      const double dx = (x - sh.a) / sh.c, dy = (y - sh.b) / sh.d;
      return dx * dx + dy * dy <= 1.0;
    }
    case ShapeKind::Rectangle:
      return x >= sh.a && x <= sh.c && y >= sh.b && y <= sh.d;
    case ShapeKind::Stroke: {
      const double vx = sh.c - sh.a, vy = sh.d - sh.b;
      const double len2 = vx * vx + vy * vy;
      const double t = len2 > 0 ? std::clamp(((x - sh.a) * vx + (y - sh.b) * vy) / len2, 0.0, 1.0) : 0.0;
      const double px = sh.a + t * vx - x, py = sh.b + t * vy - y;
      return px * px + py * py <= sh.thickness * sh.thickness;
    }
  }
  return false;
}

}  // namespace

std::vector<std::uint16_t> label_map(const Geometry& g, std::size_t size) {
  std::vector<std::uint16_t> labels(size * size, 0);
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const double px = static_cast<double>(x) + 0.5, py = static_cast<double>(y) + 0.5;
      for (std::size_t i = 0; i < g.shapes.size(); ++i)
        if (covers(g.shapes[i], px, py)) labels[y * size + x] = static_cast<std::uint16_t>(i + 1);
    }
  return labels;
}

std::array<double, 3> hue_color(std::size_t attribute, std::size_t classes) {
  // HSV with saturation 0.85 and value 1.
  const double h = 6.0 * static_cast<double>(attribute % classes) / static_cast<double>(classes);
  const double s = 0.85;
  const int sector = static_cast<int>(std::floor(h)) % 6;
  const double f = h - std::floor(h);
  const double p = 1.0 - s, q = 1.0 - s * f, t = 1.0 - s * (1.0 - f);
  switch (sector) {
    case 0: return {1.0, t, p};
    case 1: return {q, 1.0, p};
    case 2: return {p, 1.0, t};
    case 3: return {p, q, 1.0};
    case 4: return {t, p, 1.0};
    default: return {1.0, p, q};
  }
}

Tensor render_photo(const Geometry& g, std::size_t attribute, const SyntheticDomainSpec& spec) {
  const std::size_t n = spec.image_size;
  const auto labels = label_map(g, n);
  const auto rgb = hue_color(attribute, spec.hue_classes);
  std::vector<double> out(3 * n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      const std::uint16_t l = labels[y * n + x];
      // Vertical light falloff so flat regions are not perfectly constant.
      const double light = 0.85 + 0.15 * (1.0 - static_cast<double>(y) / static_cast<double>(n));
      for (std::size_t c = 0; c < 3; ++c) {
        const double v = l == 0 ? 0.5 * light : rgb[c] * g.shapes[l - 1].shade * light;
        out[(c * n + y) * n + x] = 2.0 * v - 1.0;
      }
    }
  return Tensor::from_data({3, n, n}, std::move(out));
}

Tensor render_sketch(const Geometry& g, std::size_t size) {
  const auto labels = label_map(g, size);
  std::vector<double> out(size * size, 1.0);
  // A pixel is drawn when a 4-neighbour has a lower label, so each boundary
  // is one pixel wide on the inside of the upper shape.
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const std::uint16_t l = labels[y * size + x];
      const bool edge = (x > 0 && labels[y * size + x - 1] < l) || (x + 1 < size && labels[y * size + x + 1] < l) ||
                        (y > 0 && labels[(y - 1) * size + x] < l) ||
                        (y + 1 < size && labels[(y + 1) * size + x] < l);
      if (edge) out[y * size + x] = -1.0;
    }
  return Tensor::from_data({1, size, size}, std::move(out));
}

SyntheticItem make_synthetic_item(const SyntheticDomainSpec& spec, std::size_t index) {
  if (spec.hue_classes == 0) throw ConfigError("hue class count must be positive");
  SyntheticItem item;
  item.geometry = random_geometry(spec, derive_seed(spec.seed, {index, 0}));
  item.attribute = derive_seed(spec.seed, {index, 1}) % spec.hue_classes;
  item.photo = render_photo(item.geometry, item.attribute, spec);
  item.sketch = render_sketch(item.geometry, spec.image_size);
  return item;
}

std::vector<SyntheticItem> gen_synthetic_domains(const SyntheticDomainSpec& spec, std::size_t count,
                                                 std::size_t first_index) {
  if (count == 0) throw ContractError("synthetic dataset needs at least one item");
  std::vector<SyntheticItem> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) out.push_back(make_synthetic_item(spec, first_index + i));
  return out;
}

Tensor to_grayscale(const Tensor& rgb) {
  if (rgb.rank() != 3 || rgb.dim(0) != 3) throw DimensionError("to_grayscale expects [3,H,W]");
  const std::size_t plane = rgb.dim(1) * rgb.dim(2);
  std::vector<double> out(plane);
  auto d = rgb.data();
  for (std::size_t i = 0; i < plane; ++i) out[i] = 0.299 * d[i] + 0.587 * d[plane + i] + 0.114 * d[2 * plane + i];
  return Tensor::from_data({1, rgb.dim(1), rgb.dim(2)}, std::move(out));
}

}  // namespace scg
