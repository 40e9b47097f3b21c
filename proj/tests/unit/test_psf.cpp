#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <cstring>
#include <numeric>
#include <set>

#include "scg/error.hpp"
#include "scg/matching.hpp"
#include "scg/rng.hpp"
#include "scg/ssim.hpp"
#include "test_util.hpp"

using namespace scg;

namespace {

FeatureLevel random_level(int level, std::size_t c, std::size_t h, std::size_t w, Rng& rng,
                          double lo = -1.0, double hi = 1.0) {
  std::uniform_real_distribution<double> dist(lo, hi);
  FeatureLevel l;
  l.level = level;
  l.channels = c;
  l.height = h;
  l.width = w;
  l.data.resize(c * h * w);
  for (float& v : l.data) v = static_cast<float>(dist(rng));
  return l;
}

FeatureLevel constant_level(int level, std::size_t c, std::size_t h, std::size_t w, float v) {
  FeatureLevel l{level, c, h, w, std::vector<float>(c * h * w, v)};
  return l;
}

Fingerprint test_fingerprint(std::uint8_t tag = 1) {
  Fingerprint fp{};
  fp.fill(tag);
  return fp;
}

// Pyramid with a matching level and a small level-5 map for descriptors.
FeaturePyramid pyramid_of(FeatureLevel l, Rng& rng, Fingerprint fp = test_fingerprint()) {
  FeaturePyramid p;
  p.fingerprint = fp;
  if (l.level != 5) p.levels.push_back(random_level(5, 2, 2, 2, rng, 0.1, 1.0));
  p.levels.push_back(std::move(l));
  return p;
}

Tensor random_image(std::size_t c, std::size_t h, std::size_t w, std::uint64_t seed) {
  Rng rng(seed);
  return rand_uniform({c, h, w}, rng, -1.0, 1.0);
}

// Exhaustive cosine search straight over the raw maps.
struct OracleMatch {
  std::size_t ref = 0, patch = 0;
  double score = 0.0;
  bool zero = false;
};

std::vector<OracleMatch> oracle_match(const FeatureLevel& q, const std::vector<FeatureLevel>& refs,
                                      std::size_t k, std::vector<std::size_t> cands = {}) {
  if (cands.empty()) {
    cands.resize(refs.size());
    std::iota(cands.begin(), cands.end(), 0);
  }
  std::sort(cands.begin(), cands.end());
  std::vector<OracleMatch> out;
  for (std::size_t qy = 0; qy + k <= q.height; ++qy)
    for (std::size_t qx = 0; qx + k <= q.width; ++qx) {
      double qn = 0.0;
      for (std::size_t c = 0; c < q.channels; ++c)
        for (std::size_t dy = 0; dy < k; ++dy)
          for (std::size_t dx = 0; dx < k; ++dx) qn += std::pow(q.at(c, qy + dy, qx + dx), 2);
      OracleMatch best;
      if (qn == 0.0) {
        best.zero = true;
        out.push_back(best);
        continue;
      }
      best.score = -2.0;
      for (std::size_t i : cands) {
        const FeatureLevel& r = refs[i];
        const std::size_t gw = r.width - k + 1;
        for (std::size_t ry = 0; ry + k <= r.height; ++ry)
          for (std::size_t rx = 0; rx + k <= r.width; ++rx) {
            double dot = 0.0, rn = 0.0;
            for (std::size_t c = 0; c < q.channels; ++c)
              for (std::size_t dy = 0; dy < k; ++dy)
                for (std::size_t dx = 0; dx < k; ++dx) {
                  const double a = q.at(c, qy + dy, qx + dx), b = r.at(c, ry + dy, rx + dx);
                  dot += a * b;
                  rn += b * b;
                }
            const double cosv = rn == 0.0 ? 0.0 : dot / (std::sqrt(qn) * std::sqrt(rn));
            if (cosv > best.score) best = {i, ry * gw + rx, cosv, false};
          }
      }
      out.push_back(best);
    }
  return out;
}

void check_identical(const MatchResult& a, const MatchResult& b) {
  REQUIRE(a.count() == b.count());
  CHECK(a.grid_height == b.grid_height);
  CHECK(a.grid_width == b.grid_width);
  for (std::size_t j = 0; j < a.count(); ++j) {
    const auto& x = a.matches[j];
    const auto& y = b.matches[j];
    REQUIRE(x.ref == y.ref);
    REQUIRE(x.patch == y.patch);
    REQUIRE(x.zero_query == y.zero_query);
    REQUIRE(std::memcmp(&x.score, &y.score, sizeof(double)) == 0);
  }
}

void check_against_oracle(const MatchResult& r, const std::vector<OracleMatch>& o) {
  REQUIRE(r.count() == o.size());
  for (std::size_t j = 0; j < o.size(); ++j) {
    REQUIRE(r.matches[j].zero_query == o[j].zero);
    if (o[j].zero) continue;
    REQUIRE(r.matches[j].ref == o[j].ref);
    REQUIRE(r.matches[j].patch == o[j].patch);
    REQUIRE(r.matches[j].score == doctest::Approx(o[j].score).epsilon(1e-5));
  }
}

struct SmallStore {
  std::vector<FeatureLevel> photo_maps, sketch_maps;
  ReferencePatchStore store;
};

SmallStore small_store(std::size_t n, std::size_t c, std::size_t h, std::size_t w, std::size_t k,
                       Rng& rng) {
  SmallStore s;
  std::vector<FeaturePyramid> photos, sketches;
  for (std::size_t i = 0; i < n; ++i) {
    s.photo_maps.push_back(random_level(3, c, h, w, rng));
    s.sketch_maps.push_back(random_level(3, c, h, w, rng));
    photos.push_back(pyramid_of(s.photo_maps.back(), rng));
    sketches.push_back(pyramid_of(s.sketch_maps.back(), rng));
  }
  const int levels[] = {3};
  s.store = ReferencePatchStore::from_pyramids(photos, sketches, k, levels);
  return s;
}

struct ImageStore {
  FeatureExtractor extractor{ExtractorSpec{}};
  std::vector<ImagePair> pairs;
  ReferencePatchStore store;
};

// Level 5 of a 32x32 image is 2x2, too small for k = 3, so small images bank
// levels 3 and 4 only.
ImageStore image_store(std::size_t n, std::size_t size, std::uint64_t seed, std::size_t k = 3) {
  ImageStore s;
  for (std::size_t i = 0; i < n; ++i) {
    s.pairs.push_back({"ref" + std::to_string(i), random_image(3, size, size, seed + 2 * i),
                       random_image(1, size, size, seed + 2 * i + 1)});
  }
  const std::vector<int> levels = size >= 48 ? std::vector<int>{3, 4, 5} : std::vector<int>{3, 4};
  s.store = build_reference_store(s.pairs, s.extractor, k, levels);
  return s;
}

}  // namespace

// ---- patch extraction ----

TEST_CASE("k=1 patches are spatial fibers") {
  Rng rng(1);
  const FeatureLevel map = random_level(3, 4, 5, 6, rng);
  const PatchSet ps = extract_patches(map, 1);
  REQUIRE(ps.count() == 30);
  CHECK(ps.dim() == 4);
  for (std::size_t y = 0; y < 5; ++y)
    for (std::size_t x = 0; x < 6; ++x)
      for (std::size_t c = 0; c < 4; ++c) CHECK(ps.patch(y * 6 + x)[c] == map.at(c, y, x));
}

TEST_CASE("k=3 on a 1x4x4 ramp") {
  FeatureLevel map{3, 1, 4, 4, {}};
  for (int i = 0; i < 16; ++i) map.data.push_back(static_cast<float>(i));
  const PatchSet ps = extract_patches(map, 3);
  REQUIRE(ps.count() == 4);
  const std::vector<float> first(ps.patch(0).begin(), ps.patch(0).end());
  CHECK(first == std::vector<float>{0, 1, 2, 4, 5, 6, 8, 9, 10});
  CHECK(ps.origin(3) == std::pair<std::size_t, std::size_t>{1, 1});
  CHECK(ps.patch(3)[0] == 5.0f);
}

TEST_CASE("random 8x10x10 map, k=3, equals sliding-window slicing") {
  Rng rng(2);
  const FeatureLevel map = random_level(3, 8, 10, 10, rng);
  const PatchSet ps = extract_patches(map, 3);
  REQUIRE(ps.count() == 64);
  REQUIRE(ps.dim() == 72);
  for (std::size_t oy = 0; oy < 8; ++oy)
    for (std::size_t ox = 0; ox < 8; ++ox) {
      const auto p = ps.patch(oy * 8 + ox);
      std::size_t t = 0;
      double sq = 0.0;
      for (std::size_t c = 0; c < 8; ++c)
        for (std::size_t dy = 0; dy < 3; ++dy)
          for (std::size_t dx = 0; dx < 3; ++dx, ++t) {
            REQUIRE(p[t] == map.at(c, oy + dy, ox + dx));
            sq += std::pow(map.at(c, oy + dy, ox + dx), 2);
          }
      CHECK(ps.norms[oy * 8 + ox] == doctest::Approx(std::sqrt(sq)).epsilon(1e-6));
    }
}

TEST_CASE("unfold uses the same patch vectorization") {
  Rng rng(3);
  const FeatureLevel map = random_level(3, 3, 6, 7, rng);
  const Tensor t = Tensor::from_data({3, 6, 7}, std::vector<double>(map.data.begin(), map.data.end()));
  const Tensor u = unfold(t, 3);
  const PatchSet ps = extract_patches(map, 3);
  REQUIRE(u.numel() == ps.values.size());
  for (std::size_t i = 0; i < ps.values.size(); ++i) REQUIRE(u.data()[i] == ps.values[i]);
}

TEST_CASE("patch extraction errors") {
  Rng rng(4);
  const FeatureLevel map = random_level(3, 2, 4, 6, rng);
  CHECK_THROWS_AS(extract_patches(map, 5), DimensionError);
  CHECK_THROWS_AS(extract_patches(map, 2), ContractError);
  CHECK_THROWS_AS(extract_patches(map, 0), ContractError);
}

// ---- reference store ----

TEST_CASE("single-pair store has m = (H-k+1)(W-k+1) per level") {
  const ImageStore s = image_store(1, 64, 10);
  CHECK(s.store.size() == 1);
  CHECK(s.store.bank(3).patches_per_ref == 196);
  CHECK(s.store.bank(4).patches_per_ref == 36);
  CHECK(s.store.bank(5).patches_per_ref == 4);
  CHECK(s.store.descriptor_dim() == 64 * 4 * 4);
}

TEST_CASE("ten 64x64 pairs give a (10, 196, 288) level-3 bank") {
  const ImageStore s = image_store(10, 64, 20);
  const LevelBank& b = s.store.bank(3);
  CHECK(s.store.size() == 10);
  CHECK(b.patches_per_ref == 196);
  CHECK(b.dim == 288);
  CHECK(b.photo.size() == 10u * 196 * 288);
  CHECK(b.sketch.size() == 10u * 196 * 288);
  // Photo patches are unit length unless flagged.
  for (std::size_t r = 0; r < 10 * 196; ++r) {
    if (b.zero_norm[r]) continue;
    REQUIRE(patch_norm({b.photo.data() + r * 288, 288}) == doctest::Approx(1.0).epsilon(1e-6));
  }
}

TEST_CASE("store builds are deterministic and the cache reloads bit-exactly") {
  const auto dir = testing::temp_dir("store_cache");
  const ImageStore a = image_store(3, 32, 30);
  const int levels[] = {3, 4};
  const ReferencePatchStore again = build_reference_store(a.pairs, a.extractor, 3, levels);
  CHECK(a.store.encode() == again.encode());
  a.store.save(dir / "ref.scgr");
  const ReferencePatchStore loaded = ReferencePatchStore::load(dir / "ref.scgr", a.extractor.fingerprint());
  CHECK(loaded.encode() == read_file(dir / "ref.scgr"));
  CHECK(loaded.bank(3).zero_norm == a.store.bank(3).zero_norm);

  ExtractorSpec other;
  other.seed = 99;
  CHECK_THROWS_AS(ReferencePatchStore::load(dir / "ref.scgr", FeatureExtractor(other).fingerprint()),
                  IncompatibleError);
  std::string bytes = read_file(dir / "ref.scgr");
  bytes[1] = 'Z';
  CHECK_THROWS_AS(ReferencePatchStore::decode(bytes), IncompatibleError);
  CHECK_THROWS_AS(ReferencePatchStore::decode(read_file(dir / "ref.scgr").substr(0, 200)), IoError);
}

TEST_CASE("mismatched pair dimensions name the pair") {
  std::vector<ImagePair> pairs{{"a", random_image(3, 32, 32, 1), random_image(1, 32, 32, 2)},
                               {"b", random_image(3, 32, 32, 3), random_image(1, 48, 48, 4)}};
  try {
    build_reference_store(pairs, FeatureExtractor(ExtractorSpec{}), 3);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    CHECK(std::string(e.what()).find("pair 1") != std::string::npos);
  }
  CHECK_THROWS_AS(build_reference_store({}, FeatureExtractor(ExtractorSpec{}), 3), ContractError);
}

TEST_CASE("zero-norm reference patches are flagged") {
  Rng rng(5);
  FeatureLevel photo = random_level(3, 1, 5, 5, rng);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) photo.data[y * 5 + x] = 0.0f;
  const std::vector<FeaturePyramid> photos{pyramid_of(photo, rng)};
  const std::vector<FeaturePyramid> sketches{pyramid_of(random_level(3, 1, 5, 5, rng), rng)};
  const int levels[] = {3};
  const auto store = ReferencePatchStore::from_pyramids(photos, sketches, 3, levels);
  CHECK(store.bank(3).zero_norm[0] == 1);
  CHECK(std::count(store.bank(3).zero_norm.begin(), store.bank(3).zero_norm.end(), 1) == 1);
}

// ---- matching ----

TEST_CASE("seeded N=3, 1x6x6, k=3 instance agrees with the exhaustive oracle") {
  Rng rng(42);
  const SmallStore s = small_store(3, 1, 6, 6, 3, rng);
  const FeatureLevel q = random_level(3, 1, 6, 6, rng);
  const auto oracle = oracle_match(q, s.photo_maps, 3);
  const MatchResult bf = match_bruteforce(extract_patches(q, 3), s.store, 3);
  const MatchResult cv = match_conv(q, s.store, 3);
  check_against_oracle(bf, oracle);
  check_identical(bf, cv);
}

TEST_CASE("conv and brute-force matching are identical on random instances") {
  Rng rng(2024);
  std::uniform_int_distribution<std::size_t> pick_n(1, 4), pick_c(1, 3), pick_k(0, 1);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t k = pick_k(rng) ? 3 : 1;
    std::uniform_int_distribution<std::size_t> pick_hw(k, 12);
    const std::size_t n = pick_n(rng), c = pick_c(rng);
    const SmallStore s = small_store(n, c, pick_hw(rng), pick_hw(rng), k, rng);
    const FeatureLevel q = random_level(3, c, pick_hw(rng), pick_hw(rng), rng);
    std::vector<std::size_t> cands;
    if (trial % 2 == 1) {
      for (std::size_t i = 0; i < n; ++i)
        if (rng() % 2 == 0) cands.push_back(i);
      if (cands.empty()) cands.push_back(n - 1);
    }
    CAPTURE(trial);
    const MatchResult bf = match_bruteforce(extract_patches(q, k), s.store, 3, cands);
    const MatchResult cv = match_conv(q, s.store, 3, cands);
    check_identical(bf, cv);
    check_against_oracle(cv, oracle_match(q, s.photo_maps, k, cands));
  }
}

TEST_CASE("a reference photo matches itself with score 1 at every level") {
  const ImageStore s = image_store(3, 64, 50);
  const FeaturePyramid q = s.extractor.extract(s.pairs[0].photo, "q");
  for (int level : kPyramidLevels) {
    const MatchResult cv = match_conv(q, s.store, level);
    check_identical(cv, match_bruteforce(extract_patches(q, level, 3), s.store, level));
    for (std::size_t j = 0; j < cv.count(); ++j) {
      CAPTURE(level);
      CAPTURE(j);
      REQUIRE_FALSE(cv.matches[j].zero_query);
      REQUIRE(cv.matches[j].ref == 0);
      REQUIRE(cv.matches[j].patch == j);
      REQUIRE(cv.matches[j].score == doctest::Approx(1.0).epsilon(1e-6));
    }
  }
}

TEST_CASE("scaling query patches by a positive factor keeps the argmax") {
  Rng rng(7);
  const SmallStore s = small_store(3, 2, 8, 8, 3, rng);
  const FeatureLevel q = random_level(3, 2, 9, 9, rng);
  const PatchSet base = extract_patches(q, 3);
  PatchSet scaled = base;
  for (std::size_t j = 0; j < scaled.count(); j += 2) {
    for (std::size_t t = 0; t < scaled.dim(); ++t) scaled.values[j * scaled.dim() + t] *= 2.5f;
    scaled.norms[j] = patch_norm(scaled.patch(j));
  }
  const MatchResult a = match_bruteforce(base, s.store, 3);
  const MatchResult b = match_bruteforce(scaled, s.store, 3);
  for (std::size_t j = 0; j < a.count(); ++j) {
    CHECK(a.matches[j].ref == b.matches[j].ref);
    CHECK(a.matches[j].patch == b.matches[j].patch);
  }
  FeatureLevel q2 = q;
  for (float& v : q2.data) v *= 2.5f;
  const MatchResult c = match_conv(q2, s.store, 3);
  for (std::size_t j = 0; j < a.count(); ++j) CHECK(a.matches[j].patch == c.matches[j].patch);
}

TEST_CASE("constant query maps resolve ties to the smallest indices") {
  Rng rng(8);
  SUBCASE("constant store: every cosine is 1, so (0,0) everywhere") {
    std::vector<FeaturePyramid> photos, sketches;
    for (float v : {0.5f, 2.0f, 1.0f}) {
      photos.push_back(pyramid_of(constant_level(3, 2, 5, 5, v), rng));
      sketches.push_back(pyramid_of(random_level(3, 2, 5, 5, rng), rng));
    }
    const int levels[] = {3};
    const auto store = ReferencePatchStore::from_pyramids(photos, sketches, 3, levels);
    const MatchResult r = match_conv(constant_level(3, 2, 7, 7, 0.3f), store, 3);
    for (const auto& m : r.matches) {
      CHECK(m.ref == 0);
      CHECK(m.patch == 0);
      CHECK(m.score == doctest::Approx(1.0));
    }
  }
  SUBCASE("random store: every location gets the same match") {
    const SmallStore s = small_store(3, 2, 6, 6, 3, rng);
    const MatchResult r = match_conv(constant_level(3, 2, 7, 7, 0.3f), s.store, 3);
    const auto o = oracle_match(constant_level(3, 2, 7, 7, 0.3f), s.photo_maps, 3);
    for (std::size_t j = 0; j < r.count(); ++j) {
      CHECK(r.matches[j].ref == r.matches[0].ref);
      CHECK(r.matches[j].patch == r.matches[0].patch);
      CHECK(r.matches[j].ref == o[j].ref);
      CHECK(r.matches[j].patch == o[j].patch);
    }
  }
}

TEST_CASE("zero-norm query patches match (0,0) with score 0 and a flag") {
  Rng rng(9);
  const SmallStore s = small_store(2, 1, 5, 5, 3, rng);
  FeatureLevel q = random_level(3, 1, 6, 6, rng);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) q.data[y * 6 + x] = 0.0f;
  const MatchResult r = match_conv(q, s.store, 3);
  CHECK(r.matches[0].zero_query);
  CHECK(r.matches[0].ref == 0);
  CHECK(r.matches[0].patch == 0);
  CHECK(r.matches[0].score == 0.0);
  CHECK_FALSE(r.matches[1].zero_query);
  check_identical(r, match_bruteforce(extract_patches(q, 3), s.store, 3));
}

TEST_CASE("matching contract errors") {
  Rng rng(10);
  const SmallStore s = small_store(2, 2, 5, 5, 3, rng);
  const FeatureLevel q = random_level(3, 2, 6, 6, rng);
  const std::size_t bad[] = {5};
  CHECK_THROWS_AS(match_conv(q, s.store, 3, bad), ContractError);
  CHECK_THROWS_AS(match_conv(random_level(3, 3, 6, 6, rng), s.store, 3), DimensionError);
  CHECK_THROWS_AS(match_conv(q, s.store, 4), ContractError);
  CHECK_THROWS_AS(match_conv(q, ReferencePatchStore{}, 3), ContractError);
  FeaturePyramid other = pyramid_of(q, rng, test_fingerprint(2));
  CHECK_THROWS_AS(match_conv(other, s.store, 3), IncompatibleError);
  PatchSet ps = extract_patches(other, 3, 3);
  CHECK_THROWS_AS(match_bruteforce(ps, s.store, 3), IncompatibleError);
}

// ---- coarse candidates ----

TEST_CASE("candidate selection") {
  const ImageStore s = image_store(5, 32, 60);
  const FeaturePyramid q = s.extractor.extract(random_image(3, 32, 32, 999), "q");
  SUBCASE("n = N returns every index") {
    const auto all = select_candidates(q, s.store, 5);
    CHECK(std::set<std::size_t>(all.begin(), all.end()) == std::set<std::size_t>{0, 1, 2, 3, 4});
  }
  SUBCASE("a reference photo selects itself first") {
    const FeaturePyramid self = s.extractor.extract(s.pairs[2].photo, "r2");
    CHECK(select_candidates(self, s.store, 1) == std::vector<std::size_t>{2});
  }
  SUBCASE("order is by descending descriptor cosine") {
    const auto order = select_candidates(q, s.store, 5);
    const auto d = coarse_descriptor(q, CoarseDescriptor::Flattened);
    double prev = 2.0;
    for (std::size_t i : order) {
      double dot = 0.0;
      for (std::size_t t = 0; t < d.size(); ++t) dot += double(d[t]) * double(s.store.descriptor(i)[t]);
      CHECK(dot <= prev);
      prev = dot;
    }
  }
  SUBCASE("bounds") {
    CHECK(kDefaultCandidates == 3);
    CHECK_THROWS_AS(select_candidates(q, s.store, 0), ContractError);
    CHECK_THROWS_AS(select_candidates(q, s.store, 6), ContractError);
    CHECK_THROWS_AS(select_candidates(q, ReferencePatchStore{}, 1), ContractError);
  }
}

TEST_CASE("pooled-mean descriptor is available behind a flag") {
  ImageStore s = image_store(3, 32, 61);
  const ReferencePatchStore pooled =
      build_reference_store(s.pairs, s.extractor, 3, std::vector<int>{3, 4}, CoarseDescriptor::PooledMean);
  CHECK(pooled.descriptor_kind() == CoarseDescriptor::PooledMean);
  CHECK(pooled.descriptor_dim() == 64);
  const FeaturePyramid self = s.extractor.extract(s.pairs[1].photo, "r1");
  CHECK(select_candidates(self, pooled, 1) == std::vector<std::size_t>{1});
}

TEST_CASE("coarse-to-fine matching equals restricted brute force") {
  const ImageStore s = image_store(5, 32, 70);
  const FeaturePyramid q = s.extractor.extract(random_image(3, 32, 32, 71), "q");
  const auto all = select_candidates(q, s.store, 5);
  for (int level : {3, 4}) {
    check_identical(match_conv(q, s.store, level, all), match_conv(q, s.store, level));
    const auto two = select_candidates(q, s.store, 2);
    const MatchResult restricted = match_conv(q, s.store, level, two);
    check_identical(restricted, match_bruteforce(extract_patches(q, level, 3), s.store, level, two));
    for (const auto& m : restricted.matches) CHECK((m.ref == two[0] || m.ref == two[1]));
  }
}

// ---- PSF assembly ----

TEST_CASE("PSF gathers the aligned sketch patches") {
  Rng rng(11);
  const SmallStore s = small_store(3, 2, 7, 7, 3, rng);
  const FeatureLevel q = random_level(3, 2, 8, 8, rng);
  const MatchResult r = match_conv(q, s.store, 3);
  const PsfLevel psf = assemble_psf_level(r, s.store);
  REQUIRE(psf.count() == r.count());
  // Gather oracle over the raw sketch maps.
  for (std::size_t j = 0; j < r.count(); ++j) {
    const PatchSet sk = extract_patches(s.sketch_maps[r.matches[j].ref], 3);
    const auto want = sk.patch(r.matches[j].patch);
    REQUIRE(std::equal(want.begin(), want.end(), psf.patch(j).begin()));
    CHECK(psf.mask[j] == 1);
  }
  const Tensor target = psf.target();
  CHECK(target.shape() == Shape{36, 18});
  CHECK(psf.mask_tensor().shape() == Shape{36, 18});
}

TEST_CASE("PSF from a store whose sketches equal its photos returns raw photo patches") {
  Rng rng(12);
  std::vector<FeatureLevel> maps;
  std::vector<FeaturePyramid> pyrs;
  for (int i = 0; i < 3; ++i) {
    maps.push_back(random_level(3, 2, 6, 6, rng));
    pyrs.push_back(pyramid_of(maps.back(), rng));
  }
  const int levels[] = {3};
  const auto store = ReferencePatchStore::from_pyramids(pyrs, pyrs, 3, levels);
  const FeatureLevel q = random_level(3, 2, 6, 6, rng);
  const MatchResult r = match_conv(q, store, 3);
  const PsfLevel psf = assemble_psf_level(r, store);
  for (std::size_t j = 0; j < r.count(); ++j) {
    const PatchSet raw = extract_patches(maps[r.matches[j].ref], 3);
    const auto want = raw.patch(r.matches[j].patch);
    REQUIRE(std::equal(want.begin(), want.end(), psf.patch(j).begin()));
  }
}

TEST_CASE("self-match PSF equals the reference's own sketch patches") {
  const ImageStore s = image_store(3, 64, 80);
  const FeaturePyramid q = s.extractor.extract(s.pairs[0].photo, "q");
  const FeaturePyramid sk = s.extractor.extract(s.pairs[0].sketch, "s");
  PsfOptions opts;
  const PseudoSketchFeature psf = build_psf(q, s.store, opts);
  for (int level : kPyramidLevels) {
    const PatchSet own = extract_patches(sk, level, 3);
    CHECK(psf.level(level).patches == own.values);
  }
  opts.method = MatchMethod::BruteForce;
  const PseudoSketchFeature bf = build_psf(q, s.store, opts);
  for (int level : kPyramidLevels) CHECK(bf.level(level).patches == psf.level(level).patches);
}

TEST_CASE("zero-norm flags propagate into the PSF mask") {
  Rng rng(13);
  const SmallStore s = small_store(2, 1, 5, 5, 3, rng);
  FeatureLevel q = random_level(3, 1, 5, 5, rng);
  for (std::size_t y = 0; y < 3; ++y)
    for (std::size_t x = 0; x < 3; ++x) q.data[y * 5 + x] = 0.0f;
  const PsfLevel psf = assemble_psf_level(match_conv(q, s.store, 3), s.store);
  CHECK(psf.mask[0] == 0);
  CHECK(psf.mask[1] == 1);
  const Tensor m = psf.mask_tensor();
  CHECK(m.data()[0] == 0.0);
  CHECK(m.data()[psf.dim()] == 1.0);
}

// ---- pixel projection ----

TEST_CASE("projection of constant sketches is constant") {
  Rng rng(14);
  std::vector<FeaturePyramid> photos, sketches;
  std::vector<Tensor> sketch_images;
  for (int i = 0; i < 2; ++i) {
    photos.push_back(pyramid_of(random_level(3, 2, 6, 6, rng), rng));
    sketches.push_back(pyramid_of(random_level(3, 2, 6, 6, rng), rng));
    sketch_images.push_back(Tensor::full({1, 24, 24}, 0.2));
  }
  const int levels[] = {3};
  const auto store = ReferencePatchStore::from_pyramids(photos, sketches, 3, levels);
  const MatchResult r = match_conv(random_level(3, 2, 5, 7, rng), store, 3);
  const Tensor img = pixel_projection(r, store, sketch_images);
  CHECK(img.shape() == Shape{1, 20, 28});
  for (double v : img.data()) CHECK(v == doctest::Approx(0.6));
}

TEST_CASE("single-patch store tiles its one block") {
  Rng rng(15);
  const std::vector<FeaturePyramid> photos{pyramid_of(random_level(3, 1, 3, 3, rng, 0.1, 1.0), rng)};
  const std::vector<FeaturePyramid> sketches{pyramid_of(random_level(3, 1, 3, 3, rng), rng)};
  const int levels[] = {3};
  const auto store = ReferencePatchStore::from_pyramids(photos, sketches, 3, levels);
  REQUIRE(store.bank(3).patches_per_ref == 1);
  const Tensor sketch = random_image(1, 12, 12, 16);
  auto src = sketch.data();

  SUBCASE("query of exactly one patch reproduces the block") {
    const MatchResult r = match_conv(random_level(3, 1, 3, 3, rng, 0.1, 1.0), store, 3);
    const Tensor img = pixel_projection(r, store, {sketch});
    for (std::size_t i = 0; i < 144; ++i) CHECK(img.data()[i] == doctest::Approx((src[i] + 1.0) / 2.0));
  }
  SUBCASE("larger query repeats the centre block in the interior") {
    const MatchResult r = match_conv(random_level(3, 1, 7, 7, rng, 0.1, 1.0), store, 3);
    const Tensor img = pixel_projection(r, store, {sketch});
    REQUIRE(img.shape() == Shape{1, 28, 28});
    for (std::size_t cy = 1; cy < 6; ++cy)
      for (std::size_t cx = 1; cx < 6; ++cx)
        for (std::size_t py = 0; py < 4; ++py)
          for (std::size_t px = 0; px < 4; ++px) {
            const double want = (src[(4 + py) * 12 + 4 + px] + 1.0) / 2.0;
            REQUIRE(img.data()[(cy * 4 + py) * 28 + cx * 4 + px] == doctest::Approx(want));
          }
  }
}

TEST_CASE("self-match projection ranks the true sketch first by SSIM") {
  const ImageStore s = image_store(4, 64, 90);
  std::vector<Tensor> sketches;
  for (const auto& p : s.pairs) sketches.push_back(p.sketch);
  SsimParams params;
  params.dynamic_range = 1.0;
  for (std::size_t who = 0; who < 4; ++who) {
    const FeaturePyramid q = s.extractor.extract(s.pairs[who].photo, "q");
    const Tensor img = pixel_projection(match_conv(q, s.store, 3), s.store, sketches);
    std::vector<double> scores;
    for (const auto& sk : sketches) {
      std::vector<double> unit(sk.data().begin(), sk.data().end());
      for (double& v : unit) v = (v + 1.0) / 2.0;
      scores.push_back(ssim(img, Tensor::from_data({1, 64, 64}, unit), params));
    }
    const auto best = std::max_element(scores.begin(), scores.end()) - scores.begin();
    CHECK(static_cast<std::size_t>(best) == who);
  }
  CHECK_THROWS_AS(pixel_projection(match_conv(s.extractor.extract(s.pairs[0].photo, "q"), s.store, 3),
                                   s.store, {sketches[0]}),
                  ContractError);
}
