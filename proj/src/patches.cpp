#include "scg/patches.hpp"

#include <cmath>

#include "scg/error.hpp"

namespace scg {

double patch_norm(std::span<const float> patch) {
  double acc = 0.0;
  for (float v : patch) {
    const double d = v;
    acc += d * d;
  }
  return std::sqrt(acc);
}

PatchSet extract_patches(const FeatureLevel& map, std::size_t k,
                         std::optional<Fingerprint> fingerprint) {
  if (k == 0 || k % 2 == 0) throw ContractError("patch size k must be odd, got " + std::to_string(k));
  if (k > map.height || k > map.width) {
    throw DimensionError("patch size " + std::to_string(k) + " exceeds level-" +
                         std::to_string(map.level) + " map " + std::to_string(map.height) + "x" +
                         std::to_string(map.width));
  }
  PatchSet ps;
  ps.level = map.level;
  ps.k = k;
  ps.channels = map.channels;
  ps.map_height = map.height;
  ps.map_width = map.width;
  ps.fingerprint = fingerprint;
  const std::size_t gh = ps.grid_height(), gw = ps.grid_width(), dim = ps.dim();
  ps.values.resize(ps.count() * dim);
  ps.norms.resize(ps.count());
  for (std::size_t oy = 0; oy < gh; ++oy)
    for (std::size_t ox = 0; ox < gw; ++ox) {
      const std::size_t j = oy * gw + ox;
      float* dst = ps.values.data() + j * dim;
      std::size_t t = 0;
      for (std::size_t c = 0; c < map.channels; ++c)
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx) dst[t++] = map.at(c, oy + dy, ox + dx);
      ps.norms[j] = patch_norm(ps.patch(j));
    }
  return ps;
}

PatchSet extract_patches(const FeaturePyramid& pyramid, int level, std::size_t k) {
  return extract_patches(pyramid.level(level), k, pyramid.fingerprint);
}

PatchSet extract_patches(const Tensor& map, std::size_t k, int level) {
  if (map.rank() != 3) throw DimensionError("patch extraction expects [c,H,W], got " + shape_str(map.shape()));
  FeatureLevel l;
  l.level = level;
  l.channels = map.dim(0);
  l.height = map.dim(1);
  l.width = map.dim(2);
  l.data.assign(map.data().begin(), map.data().end());
  return extract_patches(l, k);
}

}  // namespace scg
