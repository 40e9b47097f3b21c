#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "scg/features.hpp"
#include "scg/tensor.hpp"

namespace scg {

// Dense stride-1 k x k patches of one feature map. Patch j has its top-left
// corner at origin(j), enumerated row-major over the
// (H-k+1) x (W-k+1) origin grid; each patch is vectorized in
// (channel, row, col) order, so element t = (c*k + dy)*k + dx.
struct PatchSet {
  int level = 0;
  std::size_t k = 0;
  std::size_t channels = 0;
  std::size_t map_height = 0, map_width = 0;
  std::vector<float> values;   // count() x dim()
  std::vector<double> norms;   // L2 norm of each patch
  std::optional<Fingerprint> fingerprint;

  std::size_t grid_height() const { return map_height - k + 1; }
  std::size_t grid_width() const { return map_width - k + 1; }
  std::size_t count() const { return grid_height() * grid_width(); }
  std::size_t dim() const { return channels * k * k; }
  std::span<const float> patch(std::size_t j) const {
    return {values.data() + j * dim(), dim()};
  }
  std::pair<std::size_t, std::size_t> origin(std::size_t j) const {
    return {j / grid_width(), j % grid_width()};
  }
};

// L2 norm accumulated in double over the patch elements in storage order.
double patch_norm(std::span<const float> patch);

PatchSet extract_patches(const FeatureLevel& map, std::size_t k,
                         std::optional<Fingerprint> fingerprint = {});
PatchSet extract_patches(const FeaturePyramid& pyramid, int level, std::size_t k);
// Convenience for raw maps [c,H,W].
PatchSet extract_patches(const Tensor& map, std::size_t k, int level = 0);

}  // namespace scg
