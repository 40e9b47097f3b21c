// Timing of the convolution matcher against the brute-force matcher on
// N = 50 references with 64x64 level-3 maps (32 channels, k = 3).
//
// Brute force over all 50 references takes minutes on one core, so it runs
// on a candidate subset and is scaled linearly in the reference count; both
// matchers are also timed on that subset directly.
//
//   bench_match [--refs N] [--map S] [--subset M] [--seed X]

#include <CLI11.hpp>

#include <chrono>
#include <cstdio>
#include <numeric>
#include <vector>

#include "scg/matching.hpp"
#include "scg/patches.hpp"
#include "scg/reference_store.hpp"
#include "scg/rng.hpp"

using namespace scg;

namespace {

FeatureLevel random_level(int id, std::size_t c, std::size_t s, Rng& rng) {
  FeatureLevel l;
  l.level = id;
  l.channels = c;
  l.height = l.width = s;
  l.data.resize(c * s * s);
  std::normal_distribution<float> dist(0.0f, 1.0f);
  // Post-ReLU-like maps: half the entries are zero.
  for (float& v : l.data) v = std::max(0.0f, dist(rng));
  return l;
}

FeaturePyramid random_pyramid(std::size_t map, Rng& rng) {
  FeaturePyramid p;
  p.levels.push_back(random_level(3, 32, map, rng));
  p.levels.push_back(random_level(5, 64, std::max<std::size_t>(map / 4, 1), rng));
  return p;
}

template <class F>
double seconds(F&& f) {
  const auto t0 = std::chrono::steady_clock::now();
  f();
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Patch matcher timing"};
  std::size_t refs = 50, map = 64, subset = 2;
  std::uint64_t seed = 7;
  app.add_option("--refs", refs, "Reference count")->capture_default_str();
  app.add_option("--map", map, "Level-3 map side")->capture_default_str();
  app.add_option("--subset", subset, "References timed for brute force")->capture_default_str();
  app.add_option("--seed", seed, "Seed")->capture_default_str();
  CLI11_PARSE(app, argc, argv);
  subset = std::min(subset, refs);

  Rng rng(seed);
  std::vector<FeaturePyramid> photos, sketches;
  for (std::size_t i = 0; i < refs; ++i) {
    photos.push_back(random_pyramid(map, rng));
    sketches.push_back(random_pyramid(map, rng));
  }
  const std::array<int, 1> levels{3};
  const ReferencePatchStore store = ReferencePatchStore::from_pyramids(photos, sketches, 3, levels);
  const FeaturePyramid query = random_pyramid(map, rng);
  const PatchSet query_patches = extract_patches(query, 3, 3);

  std::vector<std::size_t> sub(subset);
  std::iota(sub.begin(), sub.end(), 0);

  MatchResult conv_all, conv_sub, brute_sub;
  const double t_conv_all = seconds([&] { conv_all = match_conv(query, store, 3); });
  const double t_conv_sub = seconds([&] { conv_sub = match_conv(query, store, 3, sub); });
  const double t_brute_sub = seconds([&] { brute_sub = match_bruteforce(query_patches, store, 3, sub); });

  std::size_t agree = 0;
  for (std::size_t j = 0; j < conv_sub.count(); ++j) {
    agree += conv_sub.matches[j].ref == brute_sub.matches[j].ref &&
             conv_sub.matches[j].patch == brute_sub.matches[j].patch;
  }
  const double t_brute_all = t_brute_sub * static_cast<double>(refs) / static_cast<double>(subset);

  std::printf("refs=%zu map=%zux%zu channels=32 k=3 query_patches=%zu bank_patches=%zu\n", refs, map, map,
              query_patches.count(), store.bank(3).patches_per_ref * refs);
  std::printf("subset of %zu refs: conv %.3fs, brute force %.3fs, ratio %.1fx, argmax agreement %zu/%zu\n", subset,
              t_conv_sub, t_brute_sub, t_brute_sub / t_conv_sub, agree, conv_sub.count());
  std::printf("all %zu refs: conv %.3fs, brute force %.1fs (extrapolated), ratio %.1fx\n", refs, t_conv_all,
              t_brute_all, t_brute_all / t_conv_all);
  return 0;
}
