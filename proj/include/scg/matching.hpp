#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "scg/features.hpp"
#include "scg/patches.hpp"
#include "scg/reference_store.hpp"
#include "scg/tensor.hpp"

namespace scg {

struct PatchMatch {
  std::uint32_t ref = 0;    // i'
  std::uint32_t patch = 0;  // j'
  double score = 0.0;       // cosine similarity, clamped to [-1, 1]
  bool zero_query = false;  // query patch had zero norm; excluded from losses
};

// Best reference patch for every query patch of one level, indexed like the
// query PatchSet (row-major over the origin grid).
struct MatchResult {
  int level = 0;
  std::size_t k = 0;
  std::size_t grid_height = 0, grid_width = 0;
  std::vector<PatchMatch> matches;

  std::size_t count() const { return matches.size(); }
};

// Both matchers visit candidates in ascending (i', j') order and keep the
// first strict maximum, so ties resolve to the lexicographically smallest
// pair. Every score is sum_t(q_t * u_t) / (|q| |u|), where q and the stored
// unit bank patch u are float, |u| is the double norm of the rounded u, and
// the sum runs in double over t in storage order. Float products are exact
// in double, so the two matchers produce bit-identical results. An empty
// `candidates` span means all references.
MatchResult match_bruteforce(const PatchSet& query, const ReferencePatchStore& store, int level,
                             std::span<const std::size_t> candidates = {});

// Convolution form: every bank patch slides over the query map as a kernel,
// and query norms come from the squared map convolved with a ones kernel.
MatchResult match_conv(const FeatureLevel& query_map, const ReferencePatchStore& store, int level,
                       std::span<const std::size_t> candidates = {});
MatchResult match_conv(const FeaturePyramid& query, const ReferencePatchStore& store, int level,
                       std::span<const std::size_t> candidates = {});
MatchResult match_conv(const Tensor& query_map, const ReferencePatchStore& store, int level,
                       std::span<const std::size_t> candidates = {});

// The n references whose level-5 descriptors are most cosine-similar to the
// query's, by descending similarity with ties to the smaller index.
std::vector<std::size_t> select_candidates(const FeaturePyramid& query,
                                           const ReferencePatchStore& store, std::size_t n);

inline constexpr std::size_t kDefaultCandidates = 3;

// Gathered sketch patches for one level: patches[j] is the stored sketch
// patch at the match of query patch j.
struct PsfLevel {
  int level = 0;
  std::size_t k = 0, channels = 0;
  std::size_t grid_height = 0, grid_width = 0;
  std::vector<float> patches;      // [m, c*k*k]
  std::vector<std::uint8_t> mask;  // [m], 1 = usable, 0 = zero-norm query

  std::size_t count() const { return mask.size(); }
  std::size_t dim() const { return channels * k * k; }
  std::span<const float> patch(std::size_t j) const { return {patches.data() + j * dim(), dim()}; }
  // [m, dim] target and [m, dim] mask tensors for loss computation.
  Tensor target() const;
  Tensor mask_tensor() const;
};

struct PseudoSketchFeature {
  std::vector<PsfLevel> levels;
  const PsfLevel& level(int id) const;
  bool has_level(int id) const;
};

PsfLevel assemble_psf_level(const MatchResult& matches, const ReferencePatchStore& store);
PseudoSketchFeature assemble_psf(std::span<const MatchResult> matches, const ReferencePatchStore& store);

enum class MatchMethod { Conv, BruteForce };

struct PsfOptions {
  std::vector<int> levels{3, 4, 5};
  std::size_t candidates = kDefaultCandidates;  // clamped to the store size
  MatchMethod method = MatchMethod::Conv;
};

// Coarse candidate selection, per-level matching, and gathering in one call.
PseudoSketchFeature build_psf(const FeaturePyramid& query, const ReferencePatchStore& store,
                              const PsfOptions& options = {});

// Visualization only: pastes, for every level-l grid cell, the pixel block
// under the matched reference sketch cell. Cell (y, x) of the map covers the
// `downsample` x `downsample` pixel block at (y, x) * downsample. Each query
// patch contributes its centre cell; border cells not at any patch centre
// take the nearest patch centre's match. Output is [1, H, W] in [0, 1].
Tensor pixel_projection(const MatchResult& matches, const ReferencePatchStore& store,
                        const std::vector<Tensor>& reference_sketches, std::size_t downsample = 4);

}  // namespace scg
