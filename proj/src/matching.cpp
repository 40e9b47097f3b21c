#include "scg/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "scg/error.hpp"

namespace scg {

namespace {

constexpr std::size_t kTile = 256;  // query locations per tile
constexpr std::size_t kBlock = 4;   // bank patches per register block

std::vector<std::size_t> normalize_candidates(std::span<const std::size_t> candidates, std::size_t n) {
  std::vector<std::size_t> out;
  if (candidates.empty()) {
    out.resize(n);
    std::iota(out.begin(), out.end(), 0);
    return out;
  }
  out.assign(candidates.begin(), candidates.end());
  std::sort(out.begin(), out.end());
  out.erase(std::unique(out.begin(), out.end()), out.end());
  if (out.back() >= n) {
    throw ContractError("candidate reference " + std::to_string(out.back()) + " is out of range for a store of " +
                        std::to_string(n));
  }
  return out;
}

const LevelBank& checked_bank(const ReferencePatchStore& store, int level, std::size_t channels,
                              std::size_t k) {
  if (store.empty()) throw ContractError("reference store is empty");
  const LevelBank& bank = store.bank(level);
  if (k != store.k()) {
    throw DimensionError("query patch size " + std::to_string(k) + " differs from store k = " +
                         std::to_string(store.k()));
  }
  if (channels != bank.channels) {
    throw DimensionError("query has " + std::to_string(channels) + " channels at level " +
                         std::to_string(level) + ", store has " + std::to_string(bank.channels));
  }
  return bank;
}

void check_fingerprint(const Fingerprint& query, const ReferencePatchStore& store) {
  if (query != store.fingerprint()) {
    throw IncompatibleError("query features come from extractor " + to_hex(query).substr(0, 16) +
                            " but the store was built with " + to_hex(store.fingerprint()).substr(0, 16));
  }
}

// Zero-norm bank patches score 0.
double cosine(double dot, double query_norm, double bank_norm) {
  if (bank_norm == 0.0) return 0.0;
  return std::clamp(dot / (query_norm * bank_norm), -1.0, 1.0);
}

MatchResult empty_result(int level, std::size_t k, std::size_t gh, std::size_t gw) {
  MatchResult r;
  r.level = level;
  r.k = k;
  r.grid_height = gh;
  r.grid_width = gw;
  r.matches.resize(gh * gw);
  return r;
}

}  // namespace

MatchResult match_bruteforce(const PatchSet& query, const ReferencePatchStore& store, int level,
                             std::span<const std::size_t> candidates) {
  if (query.fingerprint) check_fingerprint(*query.fingerprint, store);
  const LevelBank& bank = checked_bank(store, level, query.channels, query.k);
  const auto refs = normalize_candidates(candidates, store.size());
  MatchResult result = empty_result(level, query.k, query.grid_height(), query.grid_width());
  const std::size_t dim = bank.dim;

  for (std::size_t p = 0; p < query.count(); ++p) {
    PatchMatch& best = result.matches[p];
    const double qn = query.norms[p];
    if (qn == 0.0) {
      best.zero_query = true;
      continue;
    }
    const float* q = query.patch(p).data();
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t i : refs) {
      for (std::size_t j = 0; j < bank.patches_per_ref; ++j) {
        const float* u = bank.photo_patch(i, j).data();
        double dot = 0.0;
        for (std::size_t t = 0; t < dim; ++t) dot += static_cast<double>(q[t]) * static_cast<double>(u[t]);
        const double s = cosine(dot, qn, bank.photo_patch_norm(i, j));
        if (s > best_score) {
          best_score = s;
          best.ref = static_cast<std::uint32_t>(i);
          best.patch = static_cast<std::uint32_t>(j);
        }
      }
    }
    best.score = best_score;
  }
  return result;
}

MatchResult match_conv(const FeatureLevel& map, const ReferencePatchStore& store, int level,
                       std::span<const std::size_t> candidates) {
  const std::size_t k = store.k();
  const LevelBank& bank = checked_bank(store, level, map.channels, k);
  if (k > map.height || k > map.width) {
    throw DimensionError("patch size " + std::to_string(k) + " exceeds query map " +
                         std::to_string(map.height) + "x" + std::to_string(map.width));
  }
  const auto refs = normalize_candidates(candidates, store.size());
  const std::size_t gh = map.height - k + 1, gw = map.width - k + 1, m = gh * gw;
  const std::size_t dim = bank.dim;
  MatchResult result = empty_result(level, k, gh, gw);

  // Column layout col[t][p]: row t is the query map shifted by the kernel
  // offset of element t, so a bank patch applied as a kernel is a weighted
  // sum of rows.
  std::vector<float> col(dim * m);
  for (std::size_t c = 0, t = 0; c < map.channels; ++c)
    for (std::size_t dy = 0; dy < k; ++dy)
      for (std::size_t dx = 0; dx < k; ++dx, ++t)
        for (std::size_t oy = 0; oy < gh; ++oy)
          for (std::size_t ox = 0; ox < gw; ++ox) col[t * m + oy * gw + ox] = map.at(c, oy + dy, ox + dx);

  // Squared map through a ones kernel.
  std::vector<double> qnorm(m, 0.0);
  for (std::size_t t = 0; t < dim; ++t) {
    const float* row = col.data() + t * m;
    for (std::size_t p = 0; p < m; ++p) qnorm[p] += static_cast<double>(row[p]) * static_cast<double>(row[p]);
  }
  for (double& v : qnorm) v = std::sqrt(v);

  std::vector<double> best_score(m, -std::numeric_limits<double>::infinity());
  std::vector<double> acc(kBlock * kTile);
  for (std::size_t p0 = 0; p0 < m; p0 += kTile) {
    const std::size_t np = std::min(kTile, m - p0);
    for (std::size_t i : refs) {
      for (std::size_t j0 = 0; j0 < bank.patches_per_ref; j0 += kBlock) {
        const std::size_t nb = std::min(kBlock, bank.patches_per_ref - j0);
        std::fill(acc.begin(), acc.end(), 0.0);
        const float* u[kBlock];
        for (std::size_t b = 0; b < kBlock; ++b) u[b] = bank.photo_patch(i, j0 + std::min(b, nb - 1)).data();
        double* a0 = acc.data();
        double* a1 = a0 + kTile;
        double* a2 = a1 + kTile;
        double* a3 = a2 + kTile;
        for (std::size_t t = 0; t < dim; ++t) {
          const float* row = col.data() + t * m + p0;
          const double w0 = u[0][t], w1 = u[1][t], w2 = u[2][t], w3 = u[3][t];
          for (std::size_t p = 0; p < np; ++p) {
            const double x = row[p];
            a0[p] += w0 * x;
            a1[p] += w1 * x;
            a2[p] += w2 * x;
            a3[p] += w3 * x;
          }
        }
        for (std::size_t b = 0; b < nb; ++b) {
          const double* a = acc.data() + b * kTile;
          for (std::size_t p = 0; p < np; ++p) {
            const double qn = qnorm[p0 + p];
            if (qn == 0.0) continue;
            const double s = cosine(a[p], qn, bank.photo_patch_norm(i, j0 + b));
            if (s > best_score[p0 + p]) {
              best_score[p0 + p] = s;
              PatchMatch& best = result.matches[p0 + p];
              best.ref = static_cast<std::uint32_t>(i);
              best.patch = static_cast<std::uint32_t>(j0 + b);
            }
          }
        }
      }
    }
  }
  for (std::size_t p = 0; p < m; ++p) {
    if (qnorm[p] == 0.0) {
      result.matches[p] = PatchMatch{0, 0, 0.0, true};
    } else {
      result.matches[p].score = best_score[p];
    }
  }
  return result;
}

MatchResult match_conv(const FeaturePyramid& query, const ReferencePatchStore& store, int level,
                       std::span<const std::size_t> candidates) {
  check_fingerprint(query.fingerprint, store);
  return match_conv(query.level(level), store, level, candidates);
}

MatchResult match_conv(const Tensor& query_map, const ReferencePatchStore& store, int level,
                       std::span<const std::size_t> candidates) {
  if (query_map.rank() != 3) {
    throw DimensionError("query map must be [c,H,W], got " + shape_str(query_map.shape()));
  }
  FeatureLevel l;
  l.level = level;
  l.channels = query_map.dim(0);
  l.height = query_map.dim(1);
  l.width = query_map.dim(2);
  l.data.assign(query_map.data().begin(), query_map.data().end());
  return match_conv(l, store, level, candidates);
}

std::vector<std::size_t> select_candidates(const FeaturePyramid& query,
                                           const ReferencePatchStore& store, std::size_t n) {
  if (store.empty()) throw ContractError("cannot select candidates from an empty store");
  if (n < 1 || n > store.size()) {
    throw ContractError("candidate count " + std::to_string(n) + " must lie in [1, " +
                        std::to_string(store.size()) + "]");
  }
  check_fingerprint(query.fingerprint, store);
  const std::vector<float> d = coarse_descriptor(query, store.descriptor_kind());
  if (d.size() != store.descriptor_dim()) {
    throw DimensionError("query level-5 map does not match the store's descriptor size");
  }
  std::vector<double> sim(store.size());
  for (std::size_t i = 0; i < store.size(); ++i) {
    const auto r = store.descriptor(i);
    double dot = 0.0;
    for (std::size_t t = 0; t < d.size(); ++t) dot += static_cast<double>(d[t]) * static_cast<double>(r[t]);
    sim[i] = dot;
  }
  std::vector<std::size_t> order(store.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return sim[a] > sim[b]; });
  order.resize(n);
  return order;
}

// ---- PSF assembly ----

Tensor PsfLevel::target() const {
  return Tensor::from_data({count(), dim()}, std::vector<double>(patches.begin(), patches.end()));
}

Tensor PsfLevel::mask_tensor() const {
  std::vector<double> m(count() * dim());
  for (std::size_t j = 0; j < count(); ++j)
    std::fill_n(m.begin() + static_cast<std::ptrdiff_t>(j * dim()), dim(), mask[j] ? 1.0 : 0.0);
  return Tensor::from_data({count(), dim()}, std::move(m));
}

const PsfLevel& PseudoSketchFeature::level(int id) const {
  for (const auto& l : levels)
    if (l.level == id) return l;
  throw ContractError("pseudo sketch feature has no level " + std::to_string(id));
}

bool PseudoSketchFeature::has_level(int id) const {
  return std::any_of(levels.begin(), levels.end(), [id](const auto& l) { return l.level == id; });
}

PsfLevel assemble_psf_level(const MatchResult& matches, const ReferencePatchStore& store) {
  const LevelBank& bank = store.bank(matches.level);
  PsfLevel out;
  out.level = matches.level;
  out.k = matches.k;
  out.channels = bank.channels;
  out.grid_height = matches.grid_height;
  out.grid_width = matches.grid_width;
  out.patches.resize(matches.count() * bank.dim);
  out.mask.resize(matches.count());
  for (std::size_t j = 0; j < matches.count(); ++j) {
    const PatchMatch& pm = matches.matches[j];
    if (pm.ref >= store.size() || pm.patch >= bank.patches_per_ref) {
      throw ContractError("match index out of range for the store");
    }
    const auto src = bank.sketch_patch(pm.ref, pm.patch);
    std::copy(src.begin(), src.end(), out.patches.begin() + static_cast<std::ptrdiff_t>(j * bank.dim));
    out.mask[j] = pm.zero_query ? 0 : 1;
  }
  return out;
}

PseudoSketchFeature assemble_psf(std::span<const MatchResult> matches, const ReferencePatchStore& store) {
  PseudoSketchFeature psf;
  for (const auto& m : matches) psf.levels.push_back(assemble_psf_level(m, store));
  return psf;
}

PseudoSketchFeature build_psf(const FeaturePyramid& query, const ReferencePatchStore& store,
                              const PsfOptions& options) {
  const std::size_t n = std::min(options.candidates, store.size());
  const auto refs = select_candidates(query, store, n);
  std::vector<MatchResult> results;
  for (int level : options.levels) {
    if (options.method == MatchMethod::Conv) {
      results.push_back(match_conv(query, store, level, refs));
    } else {
      results.push_back(match_bruteforce(extract_patches(query, level, store.k()), store, level, refs));
    }
  }
  return assemble_psf(results, store);
}

// ---- visualization ----

Tensor pixel_projection(const MatchResult& matches, const ReferencePatchStore& store,
                        const std::vector<Tensor>& reference_sketches, std::size_t downsample) {
  if (reference_sketches.size() != store.size()) {
    throw ContractError("pixel projection needs all " + std::to_string(store.size()) +
                        " reference sketches, got " + std::to_string(reference_sketches.size()));
  }
  const LevelBank& bank = store.bank(matches.level);
  const std::size_t k = matches.k, s = downsample;
  const std::size_t ref_h = bank.map_height * s, ref_w = bank.map_width * s;
  for (std::size_t i = 0; i < reference_sketches.size(); ++i) {
    const Tensor& t = reference_sketches[i];
    if (!t.defined() || t.rank() != 3 || t.dim(0) != 1 || t.dim(1) != ref_h || t.dim(2) != ref_w) {
      throw ContractError("reference sketch " + std::to_string(i) + " must be [1," + std::to_string(ref_h) +
                          "," + std::to_string(ref_w) + "]");
    }
  }
  const std::size_t gh = matches.grid_height, gw = matches.grid_width;
  const std::size_t map_h = gh + k - 1, map_w = gw + k - 1;
  const std::size_t r = k / 2;
  const std::size_t bank_gw = bank.grid_width(k);
  std::vector<double> out(map_h * s * map_w * s);
  for (std::size_t y = 0; y < map_h; ++y) {
    const std::size_t oy = std::min(y >= r ? y - r : 0, gh - 1);
    for (std::size_t x = 0; x < map_w; ++x) {
      const std::size_t ox = std::min(x >= r ? x - r : 0, gw - 1);
      const PatchMatch& pm = matches.matches[oy * gw + ox];
      // Same offset inside the matched reference patch.
      const std::size_t ry = pm.patch / bank_gw + (y - oy);
      const std::size_t rx = pm.patch % bank_gw + (x - ox);
      auto src = reference_sketches[pm.ref].data();
      for (std::size_t py = 0; py < s; ++py)
        for (std::size_t px = 0; px < s; ++px) {
          const double v = src[(ry * s + py) * ref_w + rx * s + px];
          out[(y * s + py) * map_w * s + x * s + px] = std::clamp((v + 1.0) / 2.0, 0.0, 1.0);
        }
    }
  }
  return Tensor::from_data({1, map_h * s, map_w * s}, std::move(out));
}

}  // namespace scg
