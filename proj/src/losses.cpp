#include "scg/losses.hpp"

#include <cmath>

#include "scg/error.hpp"

namespace scg {

void LossWeights::validate() const {
  const std::pair<const char*, double> all[] = {
      {"lambda_p", lambda_p}, {"lambda_sty", lambda_sty}, {"lambda_cyc", lambda_cyc}, {"lambda_adv", lambda_adv}};
  for (const auto& [name, v] : all) {
    if (!std::isfinite(v) || v < 0.0) {
      throw ConfigError(std::string(name) + " must be a non-negative number, got " + std::to_string(v));
    }
  }
}

NoiseSpec NoiseSpec::from_pixel_units(double sigma_pixels, std::uint64_t seed) {
  if (!(sigma_pixels >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  return NoiseSpec{sigma_pixels * 2.0 / 255.0, seed};
}

namespace {

Tensor as_chw(const Tensor& map) {
  if (map.rank() == 3) return map;
  if (map.rank() == 4 && map.dim(0) == 1) return reshape(map, {map.dim(1), map.dim(2), map.dim(3)});
  throw DimensionError("feature map must be [c,h,w] or [1,c,h,w], got " + shape_str(map.shape()));
}

const Tensor& find_level(std::span<const LevelTensor> pred, int level) {
  for (const auto& p : pred)
    if (p.level == level) return p.map;
  throw DimensionError("predicted features lack pyramid level " + std::to_string(level));
}

// Checks that the predicted map yields exactly the PSF's patch grid.
Tensor checked_map(std::span<const LevelTensor> pred, const PsfLevel& psf) {
  Tensor map = as_chw(find_level(pred, psf.level));
  const std::size_t c = map.dim(0), h = map.dim(1), w = map.dim(2);
  if (c != psf.channels || h < psf.k || w < psf.k || h - psf.k + 1 != psf.grid_height ||
      w - psf.k + 1 != psf.grid_width) {
    throw DimensionError("level " + std::to_string(psf.level) + " map " + shape_str(map.shape()) + " gives " +
                         "a different patch grid than the pseudo sketch feature (" +
                         std::to_string(psf.grid_height) + "x" + std::to_string(psf.grid_width) + ", c=" +
                         std::to_string(psf.channels) + ")");
  }
  return map;
}

Tensor accumulate(Tensor total, const Tensor& term) { return total.defined() ? add(total, term) : term; }

}  // namespace

Tensor psf_loss(std::span<const LevelTensor> pred, const PseudoSketchFeature& psf,
                const FeatureLossOptions& options) {
  if (psf.levels.empty()) throw DimensionError("pseudo sketch feature has no levels");
  Tensor total;
  std::size_t contributing = 0;
  for (const PsfLevel& level : psf.levels) {
    const Tensor patches = unfold(checked_map(pred, level), level.k);
    const Tensor diff = mul(sub(patches, level.target()), level.mask_tensor());
    total = accumulate(total, sum_squares(diff));
    for (auto m : level.mask) contributing += m ? level.dim() : 0;
  }
  if (options.normalize && contributing > 0) total = scale(total, 1.0 / static_cast<double>(contributing));
  return total;
}

Tensor style_loss(std::span<const LevelTensor> pred, const PseudoSketchFeature& psf) {
  if (psf.levels.empty()) throw DimensionError("pseudo sketch feature has no levels");
  Tensor total;
  for (const PsfLevel& level : psf.levels) {
    const Tensor map = checked_map(pred, level);
    const std::size_t c = level.channels, m = level.count(), kk = level.k * level.k;
    const Tensor pooled = avg_pool2d(reshape(map, {1, c, map.dim(1), map.dim(2)}), level.k, 1);

    // Same arithmetic as avg_pool2d, so a prediction equal to the PSF gives 0.
    const double inv = 1.0 / static_cast<double>(kk);
    std::vector<double> col_mask(c * m), target(c * m);
    for (std::size_t j = 0; j < m; ++j) {
      const auto patch = level.patch(j);
      for (std::size_t ch = 0; ch < c; ++ch) {
        double acc = 0.0;
        for (std::size_t t = 0; t < kk; ++t) acc += patch[ch * kk + t];
        col_mask[ch * m + j] = level.mask[j] ? 1.0 : 0.0;
        target[ch * m + j] = level.mask[j] ? acc * inv : 0.0;
      }
    }
    const Tensor psi = mul(reshape(pooled, {c, m}), Tensor::from_data({c, m}, std::move(col_mask)));
    const Tensor psi_t = Tensor::from_data({c, m}, std::move(target));
    const Tensor gram = matmul(psi, transpose(psi));
    const Tensor gram_t = matmul(psi_t, transpose(psi_t));
    const double norm = static_cast<double>(c * m) * static_cast<double>(c * m);
    total = accumulate(total, scale(sum_squares(sub(gram, gram_t)), 1.0 / norm));
  }
  return total;
}

Tensor inject_noise(const Tensor& x, double sigma, Rng& rng) {
  if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  if (sigma == 0.0) return x;
  return add(x, randn(x.shape(), rng, sigma));
}

Tensor inject_noise(const Tensor& x, const NoiseSpec& spec) {
  Rng rng(spec.seed);
  return inject_noise(x, spec.sigma, rng);
}

CycleNoiseResult cycle_noise_loss(const Tensor& photo, const Generator& g_p2s, const Generator& g_s2p,
                                  double sigma, Rng& rng, const FeatureLossOptions& options) {
  CycleNoiseResult r;
  r.fake_sketch = g_p2s(photo);
  r.noisy_sketch = inject_noise(r.fake_sketch, sigma, rng);
  r.reconstruction = g_s2p(r.noisy_sketch);
  if (r.reconstruction.shape() != photo.shape()) {
    throw DimensionError("reconstruction " + shape_str(r.reconstruction.shape()) + " does not match photo " +
                         shape_str(photo.shape()));
  }
  r.loss = sum_squares(sub(r.reconstruction, photo));
  if (options.normalize) r.loss = scale(r.loss, 1.0 / static_cast<double>(photo.numel()));
  return r;
}

CycleNoiseResult cycle_noise_loss(const Tensor& photo, const Generator& g_p2s, const Generator& g_s2p,
                                  const NoiseSpec& spec) {
  Rng rng(spec.seed);
  return cycle_noise_loss(photo, g_p2s, g_s2p, spec.sigma, rng);
}

Tensor reconstruction_distance(const Tensor& a, const Tensor& b, const CycleOptions& options) {
  if (a.shape() != b.shape()) {
    throw DimensionError("cycle reconstruction " + shape_str(a.shape()) + " does not match input " +
                         shape_str(b.shape()));
  }
  const Tensor d = sub(a, b);
  Tensor out = options.norm == CycleNorm::L1 ? sum(abs(d)) : sum_squares(d);
  if (options.reduction == Reduction::Mean) out = scale(out, 1.0 / static_cast<double>(a.numel()));
  return out;
}

CyclePair unpaired_cycle_losses(const Tensor& photo, const Tensor& sketch, const Generator& g_p2s,
                                const Generator& g_s2p, const CycleOptions& options) {
  return {reconstruction_distance(g_s2p(g_p2s(photo)), photo, options),
          reconstruction_distance(g_p2s(g_s2p(sketch)), sketch, options)};
}

Tensor hinge_g_loss(const Tensor& fake_scores) {
  if (!fake_scores.defined() || fake_scores.numel() == 0) throw ContractError("hinge loss on an empty batch");
  return neg(mean(fake_scores));
}

Tensor hinge_d_loss(const Tensor& real_scores, const Tensor& fake_scores) {
  if (!real_scores.defined() || !fake_scores.defined() || real_scores.numel() == 0 || fake_scores.numel() == 0) {
    throw ContractError("hinge loss on an empty batch");
  }
  const Tensor real_term = mean(relu(add_scalar(neg(real_scores), 1.0)));
  const Tensor fake_term = mean(relu(add_scalar(fake_scores, 1.0)));
  return add(real_term, fake_term);
}

TotalLosses total_losses(const LossComponents& c, const LossWeights& w) {
  w.validate();
  TotalLosses out;
  auto add_term = [&](const Tensor& term, double weight) {
    if (!term.defined() || weight == 0.0) return;
    out.generator = accumulate(out.generator, weight == 1.0 ? term : scale(term, weight));
  };
  add_term(c.psf, w.lambda_p);
  add_term(c.style, w.lambda_sty);
  add_term(c.cycle, w.lambda_cyc);
  add_term(c.g_p2s, w.lambda_adv);
  add_term(c.g_s2p, w.lambda_adv);
  if (c.d_p2s.defined()) out.discriminator = c.d_p2s;
  if (c.d_s2p.defined()) out.discriminator = accumulate(out.discriminator, c.d_s2p);
  return out;
}

}  // namespace scg
