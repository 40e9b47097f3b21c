#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "scg/binary_io.hpp"
#include "scg/tensor.hpp"

namespace scg {

// Pyramid levels that stand in for relu3_1 / relu4_1 / relu5_1.
inline constexpr std::array<int, 3> kPyramidLevels{3, 4, 5};

using Fingerprint = Digest;

enum class ExtractorMode { ToyFixedSeed, FileBacked };

struct ExtractorSpec {
  ExtractorMode mode = ExtractorMode::ToyFixedSeed;
  std::uint64_t seed = 0;
  std::vector<std::size_t> level_channels{32, 64, 64};
  std::vector<std::size_t> level_downsample{4, 8, 16};
  // File-backed mode: directory holding "<image id>.scgf" files.
  std::filesystem::path feature_dir;
};

struct FeatureLevel {
  int level = 0;
  std::size_t channels = 0, height = 0, width = 0;
  std::vector<float> data;  // [channels, height, width]

  float at(std::size_t c, std::size_t y, std::size_t x) const {
    return data[(c * height + y) * width + x];
  }
};

struct FeaturePyramid {
  std::string source_id;
  Fingerprint fingerprint{};
  std::vector<FeatureLevel> levels;

  const FeatureLevel& level(int id) const;
  bool has_level(int id) const;
};

class FeatureExtractor {
 public:
  explicit FeatureExtractor(ExtractorSpec spec);

  const ExtractorSpec& spec() const { return spec_; }
  const Fingerprint& fingerprint() const { return fingerprint_; }
  bool differentiable() const { return spec_.mode == ExtractorMode::ToyFixedSeed; }

  // Differentiable feature maps of a batch [B,C,H,W] (C = 1 is replicated to
  // three channels). Returns one [B,c,h,w] tensor per pyramid level.
  std::vector<Tensor> forward(const Tensor& images) const;

  // Single image [C,H,W] in [-1,1]. File-backed mode ignores the pixels and
  // loads "<feature_dir>/<source_id>.scgf".
  FeaturePyramid extract(const Tensor& image, const std::string& source_id) const;

  std::size_t weight_count() const;

 private:
  ExtractorSpec spec_;
  std::vector<Tensor> weights_;  // five frozen [O,C,3,3] kernels
  Fingerprint fingerprint_{};
};

FeaturePyramid extract_pyramid(const Tensor& image, const FeatureExtractor& extractor,
                               const std::string& source_id = "");

// Converts per-level [1,c,h,w] or [c,h,w] tensors into float storage.
FeaturePyramid pyramid_from_tensors(const std::vector<Tensor>& levels,
                                    std::span<const int> level_ids, const Fingerprint& fp,
                                    std::string source_id = "");

// Feature cache layout, integers u32 little-endian unless noted:
//   "SCGF" | version | fingerprint (32 bytes) | level count |
//   per level: level id (u8) | c | h | w | float32 LE payload
inline constexpr std::uint32_t kFeatureFileVersion = 1;

std::string encode_features(const FeaturePyramid& pyramid);
FeaturePyramid decode_features(std::string_view bytes);
// Size in bytes implied by the per-level dimensions.
std::size_t feature_file_size(const FeaturePyramid& pyramid);

void save_features(const FeaturePyramid& pyramid, const std::filesystem::path& path);
FeaturePyramid load_features(const std::filesystem::path& path);
// Raises IncompatibleError if the stored fingerprint differs from `expected`.
FeaturePyramid load_features(const std::filesystem::path& path, const Fingerprint& expected);
// Loads every *.scgf file of a directory in name order.
std::vector<FeaturePyramid> load_feature_dir(const std::filesystem::path& dir,
                                             const std::optional<Fingerprint>& expected = {});

}  // namespace scg
