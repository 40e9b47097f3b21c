#include "scg/reference_store.hpp"

#include <algorithm>
#include <cmath>

#include "scg/binary_io.hpp"
#include "scg/error.hpp"
#include "scg/patches.hpp"

namespace scg {

namespace {

constexpr std::string_view kStoreMagic = "SCGR";

void fill_photo_norms(LevelBank& bank) {
  bank.photo_norm.resize(bank.zero_norm.size());
  for (std::size_t i = 0; i < bank.photo_norm.size(); ++i) {
    bank.photo_norm[i] = bank.zero_norm[i] ? 0.0 : patch_norm({bank.photo.data() + i * bank.dim, bank.dim});
  }
}

void normalize_in_place(std::vector<float>& v, std::size_t offset, std::size_t len,
                        bool* was_zero = nullptr) {
  const double norm = patch_norm({v.data() + offset, len});
  if (was_zero) *was_zero = norm == 0.0;
  if (norm == 0.0) return;
  for (std::size_t t = 0; t < len; ++t)
    v[offset + t] = static_cast<float>(static_cast<double>(v[offset + t]) / norm);
}

}  // namespace

std::vector<float> coarse_descriptor(const FeaturePyramid& pyramid, CoarseDescriptor kind) {
  const FeatureLevel& top = pyramid.level(5);
  std::vector<float> d;
  if (kind == CoarseDescriptor::Flattened) {
    d = top.data;
  } else {
    const std::size_t n = top.height * top.width;
    d.resize(top.channels);
    for (std::size_t c = 0; c < top.channels; ++c) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += top.data[c * n + i];
      d[c] = static_cast<float>(acc / static_cast<double>(n));
    }
  }
  normalize_in_place(d, 0, d.size());
  return d;
}

bool ReferencePatchStore::has_level(int level) const {
  return std::any_of(banks_.begin(), banks_.end(), [level](const auto& b) { return b.level == level; });
}

const LevelBank& ReferencePatchStore::bank(int level) const {
  for (const auto& b : banks_)
    if (b.level == level) return b;
  throw ContractError("reference store has no bank for level " + std::to_string(level));
}

ReferencePatchStore ReferencePatchStore::from_pyramids(const std::vector<FeaturePyramid>& photos,
                                                       const std::vector<FeaturePyramid>& sketches,
                                                       std::size_t k,
                                                       std::span<const int> bank_levels,
                                                       CoarseDescriptor descriptor) {
  if (photos.empty()) throw ContractError("reference set is empty");
  if (photos.size() != sketches.size()) {
    throw DimensionError("reference set has " + std::to_string(photos.size()) + " photos but " +
                         std::to_string(sketches.size()) + " sketches");
  }
  ReferencePatchStore s;
  s.n_refs_ = photos.size();
  s.k_ = k;
  s.fingerprint_ = photos.front().fingerprint;
  s.descriptor_kind_ = descriptor;
  for (std::size_t i = 0; i < photos.size(); ++i) {
    if (photos[i].fingerprint != s.fingerprint_ || sketches[i].fingerprint != s.fingerprint_) {
      throw IncompatibleError("reference pair " + std::to_string(i) +
                              " was extracted with a different extractor");
    }
  }

  for (int level : bank_levels) {
    LevelBank bank;
    bank.level = level;
    for (std::size_t i = 0; i < photos.size(); ++i) {
      const FeatureLevel& pl = photos[i].level(level);
      const FeatureLevel& sl = sketches[i].level(level);
      if (i == 0) {
        bank.channels = pl.channels;
        bank.map_height = pl.height;
        bank.map_width = pl.width;
      }
      if (pl.channels != bank.channels || pl.height != bank.map_height || pl.width != bank.map_width ||
          sl.channels != pl.channels || sl.height != pl.height || sl.width != pl.width) {
        throw DimensionError("reference pair " + std::to_string(i) + " has level-" +
                             std::to_string(level) + " maps that differ from the reference set");
      }
      const PatchSet pp = extract_patches(pl, k);
      const PatchSet sp = extract_patches(sl, k);
      if (i == 0) {
        bank.patches_per_ref = pp.count();
        bank.dim = pp.dim();
        bank.photo.reserve(photos.size() * pp.values.size());
        bank.sketch.reserve(photos.size() * sp.values.size());
      }
      bank.photo.insert(bank.photo.end(), pp.values.begin(), pp.values.end());
      bank.sketch.insert(bank.sketch.end(), sp.values.begin(), sp.values.end());
    }
    const std::size_t total = photos.size() * bank.patches_per_ref;
    bank.zero_norm.resize(total);
    for (std::size_t r = 0; r < total; ++r) {
      bool zero = false;
      normalize_in_place(bank.photo, r * bank.dim, bank.dim, &zero);
      bank.zero_norm[r] = zero ? 1 : 0;
    }
    fill_photo_norms(bank);
    s.banks_.push_back(std::move(bank));
  }

  for (std::size_t i = 0; i < photos.size(); ++i) {
    std::vector<float> d = coarse_descriptor(photos[i], descriptor);
    if (i == 0) s.descriptor_dim_ = d.size();
    if (d.size() != s.descriptor_dim_) throw DimensionError("coarse descriptor size mismatch");
    s.descriptors_.insert(s.descriptors_.end(), d.begin(), d.end());
  }
  return s;
}

ReferencePatchStore build_reference_store(const std::vector<ImagePair>& pairs,
                                          const FeatureExtractor& extractor, std::size_t k,
                                          std::span<const int> bank_levels,
                                          CoarseDescriptor descriptor) {
  if (pairs.empty()) throw ContractError("cannot build a reference store from zero pairs");
  std::vector<FeaturePyramid> photos, sketches;
  for (std::size_t i = 0; i < pairs.size(); ++i) {
    const auto& p = pairs[i];
    const auto& ps = p.photo.shape();
    const auto& ss = p.sketch.shape();
    if (ps.size() != 3 || ss.size() != 3 || ps[1] != ss[1] || ps[2] != ss[2]) {
      throw DimensionError("pair " + std::to_string(i) + " (" + p.id + "): photo " + shape_str(ps) +
                           " and sketch " + shape_str(ss) + " differ in size");
    }
    const auto& first = pairs.front().photo.shape();
    if (ps[1] != first[1] || ps[2] != first[2]) {
      throw DimensionError("pair " + std::to_string(i) + " (" + p.id + ") is " + shape_str(ps) +
                           ", expected the size of pair 0 " + shape_str(first));
    }
    photos.push_back(extractor.extract(p.photo, p.id));
    sketches.push_back(extractor.extract(p.sketch, p.id + ".sketch"));
  }
  return ReferencePatchStore::from_pyramids(photos, sketches, k, bank_levels, descriptor);
}

// ---- persistence ----

std::string ReferencePatchStore::encode() const {
  ByteWriter w;
  w.put_bytes(kStoreMagic);
  w.put_u32(kStoreFileVersion);
  w.put_bytes(std::string_view(reinterpret_cast<const char*>(fingerprint_.data()), fingerprint_.size()));
  w.put_u32(checked_u32(n_refs_, "N"));
  w.put_u32(checked_u32(k_, "k"));
  w.put_u32(checked_u32(banks_.size(), "level count"));
  for (const auto& b : banks_) {
    w.put_u32(static_cast<std::uint32_t>(b.level));
    w.put_u32(checked_u32(b.channels, "channels"));
    w.put_u32(checked_u32(b.map_height, "map height"));
    w.put_u32(checked_u32(b.map_width, "map width"));
    for (const auto* payload : {&b.photo, &b.sketch}) {
      w.put_u32(checked_u32(n_refs_, "N"));
      w.put_u32(checked_u32(b.patches_per_ref, "m"));
      w.put_u32(checked_u32(b.dim, "dim"));
      w.put_f32_array(*payload);
    }
  }
  w.put_u32(static_cast<std::uint32_t>(descriptor_kind_));
  w.put_u32(checked_u32(n_refs_, "N"));
  w.put_u32(checked_u32(descriptor_dim_, "descriptor dim"));
  w.put_f32_array(descriptors_);
  return w.take();
}

ReferencePatchStore ReferencePatchStore::decode(std::string_view bytes) {
  ByteReader r(bytes);
  if (bytes.size() < 4 || r.get_bytes(4) != kStoreMagic) {
    throw IncompatibleError("not a reference store (bad magic bytes)");
  }
  const std::uint32_t version = r.get_u32();
  if (version != kStoreFileVersion) {
    throw IncompatibleError("unsupported reference store version " + std::to_string(version));
  }
  ReferencePatchStore s;
  const std::string_view fp = r.get_bytes(s.fingerprint_.size());
  std::copy(fp.begin(), fp.end(), s.fingerprint_.begin());
  s.n_refs_ = r.get_u32();
  s.k_ = r.get_u32();
  if (s.k_ == 0) throw IoError("reference store has k = 0");
  const std::uint32_t levels = r.get_u32();
  for (std::uint32_t l = 0; l < levels; ++l) {
    LevelBank b;
    b.level = static_cast<int>(r.get_u32());
    b.channels = r.get_u32();
    b.map_height = r.get_u32();
    b.map_width = r.get_u32();
    if (b.map_height < s.k_ || b.map_width < s.k_) throw IoError("bank map smaller than k");
    for (auto* payload : {&b.photo, &b.sketch}) {
      const std::uint32_t n = r.get_u32(), m = r.get_u32(), dim = r.get_u32();
      if (n != s.n_refs_ || m != b.grid_height(s.k_) * b.grid_width(s.k_) ||
          dim != b.channels * s.k_ * s.k_) {
        throw IoError("reference store bank dimensions are inconsistent");
      }
      b.patches_per_ref = m;
      b.dim = dim;
      *payload = r.get_f32_array(static_cast<std::size_t>(n) * m * dim);
    }
    b.zero_norm.resize(s.n_refs_ * b.patches_per_ref);
    for (std::size_t i = 0; i < b.zero_norm.size(); ++i) {
      const auto p = std::span<const float>(b.photo.data() + i * b.dim, b.dim);
      b.zero_norm[i] = std::all_of(p.begin(), p.end(), [](float v) { return v == 0.0f; }) ? 1 : 0;
    }
    fill_photo_norms(b);
    s.banks_.push_back(std::move(b));
  }
  const std::uint32_t kind = r.get_u32();
  if (kind > 1) throw IoError("unknown coarse descriptor kind");
  s.descriptor_kind_ = static_cast<CoarseDescriptor>(kind);
  const std::uint32_t n = r.get_u32();
  s.descriptor_dim_ = r.get_u32();
  if (n != s.n_refs_) throw IoError("descriptor count does not match N");
  s.descriptors_ = r.get_f32_array(static_cast<std::size_t>(n) * s.descriptor_dim_);
  if (!r.at_end()) throw IoError("trailing bytes after reference store payload");
  return s;
}

void ReferencePatchStore::save(const std::filesystem::path& path) const {
  write_file_atomic(path, encode());
}

ReferencePatchStore ReferencePatchStore::load(const std::filesystem::path& path) {
  return decode(read_file(path));
}

ReferencePatchStore ReferencePatchStore::load(const std::filesystem::path& path,
                                              const Fingerprint& expected) {
  ReferencePatchStore s = load(path);
  if (s.fingerprint_ != expected) {
    throw IncompatibleError("reference store " + path.string() + " was built by extractor " +
                            to_hex(s.fingerprint_).substr(0, 16) + ", expected " +
                            to_hex(expected).substr(0, 16));
  }
  return s;
}

}  // namespace scg
