#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "scg/features.hpp"
#include "scg/tensor.hpp"

namespace scg {

// How whole-image similarity for coarse candidate selection is computed from
// the level-5 map.
enum class CoarseDescriptor : std::uint32_t {
  Flattened = 0,   // cosine over the flattened c*h*w map
  PooledMean = 1,  // cosine over per-channel spatial means
};

// Patch banks of one pyramid level. Photo and sketch banks share the
// (reference, patch) indexing, so a match into the photo bank addresses the
// aligned sketch patch directly.
struct LevelBank {
  int level = 0;
  std::size_t channels = 0, map_height = 0, map_width = 0;
  std::size_t patches_per_ref = 0;  // m = (H-k+1)(W-k+1)
  std::size_t dim = 0;              // c*k*k
  std::vector<float> photo;         // [N, m, dim], unit-normalized
  std::vector<float> sketch;        // [N, m, dim], raw
  std::vector<std::uint8_t> zero_norm;  // [N, m], photo patch had zero norm
  // [N, m], norm of each stored float photo patch in double, 0 when flagged.
  // Rounding leaves it within about 1e-7 of 1; matchers divide by it so a
  // score is the cosine against the stored direction. Derived, not persisted.
  std::vector<double> photo_norm;

  std::size_t grid_height(std::size_t k) const { return map_height - k + 1; }
  std::size_t grid_width(std::size_t k) const { return map_width - k + 1; }
  std::span<const float> photo_patch(std::size_t ref, std::size_t j) const {
    return {photo.data() + (ref * patches_per_ref + j) * dim, dim};
  }
  double photo_patch_norm(std::size_t ref, std::size_t j) const { return photo_norm[ref * patches_per_ref + j]; }
  std::span<const float> sketch_patch(std::size_t ref, std::size_t j) const {
    return {sketch.data() + (ref * patches_per_ref + j) * dim, dim};
  }
};

struct ImagePair {
  std::string id;
  Tensor photo;   // [3,H,W] in [-1,1]
  Tensor sketch;  // [1,H,W] in [-1,1]
};

class ReferencePatchStore {
 public:
  ReferencePatchStore() = default;

  // Builds banks for `bank_levels` from aligned photo/sketch pyramids. All
  // pyramids must share one fingerprint and carry level 5 for descriptors.
  static ReferencePatchStore from_pyramids(const std::vector<FeaturePyramid>& photos,
                                           const std::vector<FeaturePyramid>& sketches,
                                           std::size_t k, std::span<const int> bank_levels,
                                           CoarseDescriptor descriptor = CoarseDescriptor::Flattened);

  std::size_t size() const { return n_refs_; }
  bool empty() const { return n_refs_ == 0; }
  std::size_t k() const { return k_; }
  const Fingerprint& fingerprint() const { return fingerprint_; }
  CoarseDescriptor descriptor_kind() const { return descriptor_kind_; }

  bool has_level(int level) const;
  const LevelBank& bank(int level) const;
  const std::vector<LevelBank>& banks() const { return banks_; }

  std::size_t descriptor_dim() const { return descriptor_dim_; }
  std::span<const float> descriptor(std::size_t ref) const {
    return {descriptors_.data() + ref * descriptor_dim_, descriptor_dim_};
  }

  std::string encode() const;
  static ReferencePatchStore decode(std::string_view bytes);
  void save(const std::filesystem::path& path) const;
  static ReferencePatchStore load(const std::filesystem::path& path);
  // Raises IncompatibleError when the stored fingerprint differs.
  static ReferencePatchStore load(const std::filesystem::path& path, const Fingerprint& expected);

 private:
  std::size_t n_refs_ = 0;
  std::size_t k_ = 0;
  Fingerprint fingerprint_{};
  std::vector<LevelBank> banks_;
  CoarseDescriptor descriptor_kind_ = CoarseDescriptor::Flattened;
  std::size_t descriptor_dim_ = 0;
  std::vector<float> descriptors_;  // [N, D], unit-normalized
};

// Unit-normalized coarse descriptor of a pyramid's level-5 map.
std::vector<float> coarse_descriptor(const FeaturePyramid& pyramid, CoarseDescriptor kind);

// Extracts features for every pair and builds the store. Pairs must match
// their own photo/sketch dimensions and share one size across the set.
ReferencePatchStore build_reference_store(const std::vector<ImagePair>& pairs,
                                          const FeatureExtractor& extractor, std::size_t k,
                                          std::span<const int> bank_levels = kPyramidLevels,
                                          CoarseDescriptor descriptor = CoarseDescriptor::Flattened);

// Store cache layout, integers u32 little-endian, floats float32 little-endian:
//   "SCGR" | version | fingerprint (32 bytes) | N | k | level count |
//   per level: level id | c | map h | map w |
//              photo bank dims (N, m, dim) | payload |
//              sketch bank dims (N, m, dim) | payload |
//   descriptor kind | descriptor dims (N, D) | payload
inline constexpr std::uint32_t kStoreFileVersion = 1;

}  // namespace scg
