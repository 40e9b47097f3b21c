#include <doctest.h>

#include <cstring>

#include "scg/error.hpp"
#include "scg/synthetic.hpp"
#include "test_util.hpp"

using namespace scg;

TEST_CASE("identical geometry with a different hue gives an identical sketch") {
  SyntheticDomainSpec spec;
  spec.seed = 3;
  const Geometry g = random_geometry(spec, 17);
  const Tensor s = render_sketch(g, spec.image_size);
  for (std::size_t a = 0; a < spec.hue_classes; ++a) {
    CAPTURE(a);
    CHECK(testing::max_abs_diff(render_sketch(g, spec.image_size).data(), s.data()) == 0.0);
    if (a > 0) CHECK(testing::max_abs_diff(render_photo(g, a, spec).data(), render_photo(g, 0, spec).data()) > 0.1);
  }
}

TEST_CASE("regeneration with the same seed is byte-identical") {
  SyntheticDomainSpec spec;
  spec.seed = 11;
  const auto a = gen_synthetic_domains(spec, 20);
  const auto b = gen_synthetic_domains(spec, 20);
  spec.seed = 12;
  const auto c = gen_synthetic_domains(spec, 20);
  bool any_diff = false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    CHECK(std::memcmp(a[i].photo.data().data(), b[i].photo.data().data(), a[i].photo.numel() * sizeof(double)) == 0);
    CHECK(std::memcmp(a[i].sketch.data().data(), b[i].sketch.data().data(), a[i].sketch.numel() * sizeof(double)) == 0);
    CHECK(a[i].attribute == b[i].attribute);
    any_diff |= testing::max_abs_diff(a[i].photo.data(), c[i].photo.data()) > 0.0;
  }
  CHECK(any_diff);
  // Items are addressable by index, independent of the batch they come from.
  spec.seed = 11;
  const auto tail = gen_synthetic_domains(spec, 5, 15);
  for (std::size_t i = 0; i < 5; ++i) CHECK(testing::max_abs_diff(tail[i].photo.data(), a[15 + i].photo.data()) == 0.0);
}

TEST_CASE("rendered ranges, shapes and attribute coverage") {
  SyntheticDomainSpec spec;
  spec.seed = 5;
  const auto items = gen_synthetic_domains(spec, 400);
  std::vector<std::size_t> counts(spec.hue_classes, 0);
  for (const auto& it : items) {
    CHECK(it.photo.shape() == Shape{3, 32, 32});
    CHECK(it.sketch.shape() == Shape{1, 32, 32});
    CHECK(it.geometry.shapes.size() >= spec.min_shapes);
    CHECK(it.geometry.shapes.size() <= spec.max_shapes);
    for (double v : it.photo.data()) CHECK((v >= -1.0 && v <= 1.0));
    for (double v : it.sketch.data()) CHECK((v == -1.0 || v == 1.0));
    ++counts.at(it.attribute);
  }
  // 400 draws over 8 classes: each class expected 50, a 20..80 band is > 5 sigma.
  for (std::size_t n : counts) {
    CHECK(n > 20);
    CHECK(n < 80);
  }
}

TEST_CASE("sketch draws one-pixel boundaries of a rectangle") {
  Geometry g;
  Shape2D r;
  r.kind = ShapeKind::Rectangle;
  r.a = 4;
  r.b = 4;
  r.c = 12;
  r.d = 12;
  g.shapes.push_back(r);
  const Tensor s = render_sketch(g, 16);
  // Pixel centres 4.5..11.5 are inside, so the border ring is x or y in {4, 11}.
  std::size_t drawn = 0;
  for (std::size_t y = 0; y < 16; ++y)
    for (std::size_t x = 0; x < 16; ++x) {
      const bool inside = x >= 4 && x <= 11 && y >= 4 && y <= 11;
      const bool ring = inside && (x == 4 || x == 11 || y == 4 || y == 11);
      CHECK((s.at({0, y, x}) == -1.0) == ring);
      drawn += ring;
    }
  CHECK(drawn == 28);
}

TEST_CASE("hue colours and grayscale") {
  const auto red = hue_color(0, 6);
  CHECK(red[0] == doctest::Approx(1.0));
  CHECK(red[1] == doctest::Approx(0.15));
  CHECK(red[2] == doctest::Approx(0.15));
  const auto green = hue_color(2, 6);
  CHECK(green[1] == doctest::Approx(1.0));
  CHECK(green[0] == doctest::Approx(0.15));
  const Tensor rgb = Tensor::from_data({3, 1, 2}, {1.0, 0.0, 0.0, 1.0, 1.0, 0.0});
  const Tensor gray = to_grayscale(rgb);
  CHECK(gray.shape() == Shape{1, 1, 2});
  CHECK(gray.at({0, 0, 0}) == doctest::Approx(0.413));
  CHECK(gray.at({0, 0, 1}) == doctest::Approx(0.587));
  CHECK_THROWS_AS(to_grayscale(Tensor::zeros({1, 2, 2})), DimensionError);
}

TEST_CASE("synthetic spec errors") {
  SyntheticDomainSpec spec;
  CHECK_THROWS_AS(gen_synthetic_domains(spec, 0), ContractError);
  spec.image_size = 4;
  CHECK_THROWS_AS(make_synthetic_item(spec, 0), ConfigError);
  spec = {};
  spec.hue_classes = 0;
  CHECK_THROWS_AS(make_synthetic_item(spec, 0), ConfigError);
}
