#include "scg/features.hpp"

#include <algorithm>
#include <cmath>

#include "scg/error.hpp"
#include "scg/rng.hpp"

namespace scg {

const FeatureLevel& FeaturePyramid::level(int id) const {
  for (const auto& l : levels)
    if (l.level == id) return l;
  throw ContractError("feature pyramid has no level " + std::to_string(id));
}

bool FeaturePyramid::has_level(int id) const {
  return std::any_of(levels.begin(), levels.end(), [id](const auto& l) { return l.level == id; });
}

namespace {

// Rows of a [rows, cols] matrix made orthonormal (or columns, if rows > cols)
// by modified Gram-Schmidt, then scaled by `gain`.
std::vector<double> orthogonal_matrix(std::size_t rows, std::size_t cols, Rng& rng, double gain) {
  const bool transpose = rows > cols;
  const std::size_t n = transpose ? cols : rows;   // vectors to orthonormalize
  const std::size_t len = transpose ? rows : cols;  // their length
  std::normal_distribution<double> dist(0.0, 1.0);
  std::vector<double> v(n * len);
  for (double& x : v) x = dist(rng);
  for (std::size_t i = 0; i < n; ++i) {
    double* vi = v.data() + i * len;
    for (std::size_t j = 0; j < i; ++j) {
      const double* vj = v.data() + j * len;
      double dot = 0.0;
      for (std::size_t t = 0; t < len; ++t) dot += vi[t] * vj[t];
      for (std::size_t t = 0; t < len; ++t) vi[t] -= dot * vj[t];
    }
    double norm = 0.0;
    for (std::size_t t = 0; t < len; ++t) norm += vi[t] * vi[t];
    norm = std::sqrt(norm);
    for (std::size_t t = 0; t < len; ++t) vi[t] /= norm;
  }
  std::vector<double> out(rows * cols);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t t = 0; t < len; ++t) {
      const double x = gain * v[i * len + t];
      if (transpose) {
        out[t * cols + i] = x;
      } else {
        out[i * cols + t] = x;
      }
    }
  return out;
}

std::vector<std::size_t> block_widths(const ExtractorSpec& spec) {
  const auto& c = spec.level_channels;
  return {std::max<std::size_t>(1, c[0] / 2), c[0], c[0], c[1], c[2]};
}

void validate_spec(const ExtractorSpec& spec) {
  if (spec.level_channels.size() != 3) {
    throw ConfigError("extractor needs exactly three level channel counts");
  }
  if (spec.level_downsample != std::vector<std::size_t>{4, 8, 16}) {
    throw ConfigError("the toy extractor downsamples levels 3/4/5 by exactly 4/8/16");
  }
  for (std::size_t i = 0; i < 3; ++i) {
    if (spec.level_channels[i] == 0) throw ConfigError("extractor channel count must be positive");
    if (i > 0 && spec.level_channels[i] < spec.level_channels[i - 1]) {
      throw ConfigError("extractor channel counts must be non-decreasing with level");
    }
  }
}

void check_image_dims(std::size_t h, std::size_t w) {
  if (h % 16 != 0 || w % 16 != 0 || h == 0 || w == 0) {
    const std::size_t ph = (h + 15) / 16 * 16, pw = (w + 15) / 16 * 16;
    throw DimensionError("image " + std::to_string(h) + "x" + std::to_string(w) +
                         " must have sides divisible by 16; pad to " + std::to_string(ph) +
                         "x" + std::to_string(pw));
  }
}

void check_pixel_range(std::span<const double> values) {
  for (double v : values) {
    if (!(v >= -1.0 && v <= 1.0)) {
      throw ContractError("extractor input pixels must lie in [-1, 1]");
    }
  }
}

}  // namespace

FeatureExtractor::FeatureExtractor(ExtractorSpec spec) : spec_(std::move(spec)) {
  if (spec_.mode == ExtractorMode::FileBacked) {
    // The fingerprint is whatever the exported files carry; take it from the
    // first one so mismatches surface at construction.
    std::vector<std::filesystem::path> files;
    if (std::filesystem::is_directory(spec_.feature_dir)) {
      for (const auto& e : std::filesystem::directory_iterator(spec_.feature_dir))
        if (e.path().extension() == ".scgf") files.push_back(e.path());
    }
    if (files.empty()) {
      throw IoError("no .scgf feature files in " + spec_.feature_dir.string());
    }
    std::sort(files.begin(), files.end());
    fingerprint_ = load_features(files.front()).fingerprint;
    return;
  }

  validate_spec(spec_);
  Rng rng(derive_seed(spec_.seed, {0x5eed}));
  const auto widths = block_widths(spec_);
  ByteWriter fp;
  fp.put_bytes("scg-toy-extractor-v1");
  fp.put_u32(static_cast<std::uint32_t>(spec_.seed & 0xffffffffu));
  fp.put_u32(static_cast<std::uint32_t>(spec_.seed >> 32));
  std::size_t in_ch = 3;
  for (std::size_t out_ch : widths) {
    std::vector<double> w = orthogonal_matrix(out_ch, in_ch * 9, rng, std::sqrt(2.0));
    for (double& x : w) x = static_cast<float>(x);
    fp.put_u32(static_cast<std::uint32_t>(out_ch));
    fp.put_u32(static_cast<std::uint32_t>(in_ch));
    for (double x : w) fp.put_f32(static_cast<float>(x));
    weights_.push_back(Tensor::from_data({out_ch, in_ch, 3, 3}, std::move(w)));
    in_ch = out_ch;
  }
  fingerprint_ = sha256(fp.bytes());
}

std::size_t FeatureExtractor::weight_count() const {
  std::size_t n = 0;
  for (const auto& w : weights_) n += w.numel();
  return n;
}

std::vector<Tensor> FeatureExtractor::forward(const Tensor& images) const {
  if (!differentiable()) {
    throw ContractError("file-backed features cannot be differentiated; use the toy extractor");
  }
  if (images.rank() != 4 || (images.dim(1) != 1 && images.dim(1) != 3)) {
    throw DimensionError("extractor expects [B,1|3,H,W], got " + shape_str(images.shape()));
  }
  check_image_dims(images.dim(2), images.dim(3));
  check_pixel_range(images.data());
  Tensor x = images.dim(1) == 1 ? concat({images, images, images}, 1) : images;
  std::vector<Tensor> levels;
  for (std::size_t block = 0; block < weights_.size(); ++block) {
    x = relu(conv2d(x, weights_[block], 1, 1));
    if (block >= 2) levels.push_back(x);
    if (block + 1 < weights_.size()) x = avg_pool2d(x, 2, 2);
  }
  return levels;
}

FeaturePyramid FeatureExtractor::extract(const Tensor& image, const std::string& source_id) const {
  if (spec_.mode == ExtractorMode::FileBacked) {
    FeaturePyramid p = load_features(spec_.feature_dir / (source_id + ".scgf"), fingerprint_);
    p.source_id = source_id;
    return p;
  }
  if (image.rank() != 3) throw DimensionError("extract expects [C,H,W], got " + shape_str(image.shape()));
  const Tensor batch = reshape(image.detach(), {1, image.dim(0), image.dim(1), image.dim(2)});
  return pyramid_from_tensors(forward(batch), kPyramidLevels, fingerprint_, source_id);
}

FeaturePyramid extract_pyramid(const Tensor& image, const FeatureExtractor& extractor,
                               const std::string& source_id) {
  return extractor.extract(image, source_id);
}

FeaturePyramid pyramid_from_tensors(const std::vector<Tensor>& levels,
                                    std::span<const int> level_ids, const Fingerprint& fp,
                                    std::string source_id) {
  if (levels.size() != level_ids.size()) throw DimensionError("level count mismatch");
  FeaturePyramid p;
  p.source_id = std::move(source_id);
  p.fingerprint = fp;
  for (std::size_t i = 0; i < levels.size(); ++i) {
    const Tensor& t = levels[i];
    const std::size_t r = t.rank();
    if (r != 3 && !(r == 4 && t.dim(0) == 1)) {
      throw DimensionError("pyramid level must be [c,h,w] or [1,c,h,w], got " + shape_str(t.shape()));
    }
    FeatureLevel l;
    l.level = level_ids[i];
    l.channels = t.dim(r - 3);
    l.height = t.dim(r - 2);
    l.width = t.dim(r - 1);
    l.data.assign(t.data().begin(), t.data().end());
    p.levels.push_back(std::move(l));
  }
  return p;
}

// ---- persistence ----

namespace {
constexpr std::string_view kFeatureMagic = "SCGF";
}

std::string encode_features(const FeaturePyramid& pyramid) {
  ByteWriter w;
  w.put_bytes(kFeatureMagic);
  w.put_u32(kFeatureFileVersion);
  w.put_bytes(std::string_view(reinterpret_cast<const char*>(pyramid.fingerprint.data()),
                               pyramid.fingerprint.size()));
  w.put_u32(checked_u32(pyramid.levels.size(), "level count"));
  for (const auto& l : pyramid.levels) {
    if (l.level < 0 || l.level > 255) throw DimensionError("level id must fit in a byte");
    if (l.data.size() != l.channels * l.height * l.width) {
      throw DimensionError("feature level payload does not match its dimensions");
    }
    w.put_u8(static_cast<std::uint8_t>(l.level));
    w.put_u32(checked_u32(l.channels, "channels"));
    w.put_u32(checked_u32(l.height, "height"));
    w.put_u32(checked_u32(l.width, "width"));
    w.put_f32_array(l.data);
  }
  return w.take();
}

FeaturePyramid decode_features(std::string_view bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.get_bytes(4) != kFeatureMagic) {
    throw IncompatibleError("not a feature file (bad magic bytes)");
  }
  const std::uint32_t version = r.get_u32();
  if (version != kFeatureFileVersion) {
    throw IncompatibleError("unsupported feature file version " + std::to_string(version));
  }
  FeaturePyramid p;
  const std::string_view fp = r.get_bytes(p.fingerprint.size());
  std::copy(fp.begin(), fp.end(), p.fingerprint.begin());
  const std::uint32_t count = r.get_u32();
  for (std::uint32_t i = 0; i < count; ++i) {
    FeatureLevel l;
    l.level = r.get_u8();
    l.channels = r.get_u32();
    l.height = r.get_u32();
    l.width = r.get_u32();
    l.data = r.get_f32_array(l.channels * l.height * l.width);
    p.levels.push_back(std::move(l));
  }
  if (!r.at_end()) throw IoError("trailing bytes after feature payload");
  return p;
}

std::size_t feature_file_size(const FeaturePyramid& pyramid) {
  std::size_t n = 4 + 4 + pyramid.fingerprint.size() + 4;
  for (const auto& l : pyramid.levels) n += 1 + 12 + 4 * l.channels * l.height * l.width;
  return n;
}

void save_features(const FeaturePyramid& pyramid, const std::filesystem::path& path) {
  write_file_atomic(path, encode_features(pyramid));
}

FeaturePyramid load_features(const std::filesystem::path& path) {
  FeaturePyramid p = decode_features(read_file(path));
  p.source_id = path.stem().string();
  return p;
}

FeaturePyramid load_features(const std::filesystem::path& path, const Fingerprint& expected) {
  FeaturePyramid p = load_features(path);
  if (p.fingerprint != expected) {
    throw IncompatibleError("feature file " + path.string() + " was written by extractor " +
                            to_hex(p.fingerprint).substr(0, 16) + ", expected " +
                            to_hex(expected).substr(0, 16));
  }
  return p;
}

std::vector<FeaturePyramid> load_feature_dir(const std::filesystem::path& dir,
                                             const std::optional<Fingerprint>& expected) {
  std::vector<std::filesystem::path> files;
  for (const auto& e : std::filesystem::directory_iterator(dir))
    if (e.path().extension() == ".scgf") files.push_back(e.path());
  std::sort(files.begin(), files.end());
  std::vector<FeaturePyramid> out;
  for (const auto& f : files) out.push_back(expected ? load_features(f, *expected) : load_features(f));
  return out;
}

}  // namespace scg
