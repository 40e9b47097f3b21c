#pragma once

#include <cstdint>
#include <functional>
#include <span>
#include <utility>

#include "scg/matching.hpp"
#include "scg/rng.hpp"
#include "scg/tensor.hpp"

namespace scg {

struct LossWeights {
  double lambda_p = 1.0;
  double lambda_sty = 1.0;
  double lambda_cyc = 1.0;
  double lambda_adv = 1.0;

  // Raises ConfigError on a negative or non-finite weight.
  void validate() const;
};

// Noise level in normalized units for images in [-1, 1].
struct NoiseSpec {
  double sigma = 0.0;
  std::uint64_t seed = 0;

  // 8-bit pixel units, e.g. 20 -> 20 * 2/255.
  static NoiseSpec from_pixel_units(double sigma_pixels, std::uint64_t seed = 0);
  double pixel_units() const { return sigma * 255.0 / 2.0; }
};

inline constexpr double kDefaultNoisePixels = 20.0;

// A predicted feature map for one pyramid level, [c,h,w] or [1,c,h,w].
struct LevelTensor {
  int level = 0;
  Tensor map;
};

struct FeatureLossOptions {
  // Divide by the number of contributing elements instead of a plain sum.
  bool normalize = false;
};

// Sum over the PSF's levels and unflagged patches of squared differences
// between the predicted patches and the pseudo patches.
Tensor psf_loss(std::span<const LevelTensor> pred, const PseudoSketchFeature& psf,
                const FeatureLossOptions& options = {});

// Per level, k x k mean pooling turns both sides into psi [c, m]; the loss
// adds |psi psi^T - psi' psi'^T|^2 / (c m)^2 over levels. Flagged patches
// are zeroed on both sides.
Tensor style_loss(std::span<const LevelTensor> pred, const PseudoSketchFeature& psf);

// x + sigma * z with z ~ N(0, I) drawn from `rng`; z is a constant for
// differentiation. sigma = 0 returns x itself.
Tensor inject_noise(const Tensor& x, double sigma, Rng& rng);
Tensor inject_noise(const Tensor& x, const NoiseSpec& spec);

using Generator = std::function<Tensor(const Tensor&)>;

struct CycleNoiseResult {
  Tensor loss;
  Tensor fake_sketch;     // G_p2s(p)
  Tensor noisy_sketch;    // G_p2s(p) + sigma z
  Tensor reconstruction;  // G_s2p(noisy_sketch)
};

// |G_s2p(G_p2s(p) + sigma z) - p|^2 summed over all pixels.
CycleNoiseResult cycle_noise_loss(const Tensor& photo, const Generator& g_p2s, const Generator& g_s2p,
                                  double sigma, Rng& rng, const FeatureLossOptions& options = {});
CycleNoiseResult cycle_noise_loss(const Tensor& photo, const Generator& g_p2s, const Generator& g_s2p,
                                  const NoiseSpec& spec);

enum class CycleNorm { L1, L2 };  // L2 is the squared norm
enum class Reduction { Sum, Mean };

struct CycleOptions {
  CycleNorm norm = CycleNorm::L1;
  Reduction reduction = Reduction::Sum;
};

// Distance between a and b under the configured norm and reduction.
Tensor reconstruction_distance(const Tensor& a, const Tensor& b, const CycleOptions& options);

struct CyclePair {
  Tensor photo_term;   // |G_s2p(G_p2s(p)) - p|
  Tensor sketch_term;  // |G_p2s(G_s2p(s)) - s|
};

CyclePair unpaired_cycle_losses(const Tensor& photo, const Tensor& sketch, const Generator& g_p2s,
                                const Generator& g_s2p, const CycleOptions& options = {});

// -mean(scores)
Tensor hinge_g_loss(const Tensor& fake_scores);
// mean(relu(1 - real)) + mean(relu(1 + fake))
Tensor hinge_d_loss(const Tensor& real_scores, const Tensor& fake_scores);

struct LossComponents {
  Tensor psf;       // L_p
  Tensor style;     // L_sty
  Tensor cycle;     // L_cyc
  Tensor g_p2s;     // generator hinge term against D_s
  Tensor g_s2p;     // generator hinge term against D_p
  Tensor d_p2s;     // D_s hinge loss
  Tensor d_s2p;     // D_p hinge loss
};

struct TotalLosses {
  Tensor generator;      // may be undefined if every generator term is absent
  Tensor discriminator;  // may be undefined if both D terms are absent
};

// Weighted generator total and summed discriminator total. Undefined
// components and zero-weighted terms are left out.
TotalLosses total_losses(const LossComponents& c, const LossWeights& w);

}  // namespace scg
