#include "scg/gradient_suite.hpp"

#include <cmath>

#include "scg/gradcheck.hpp"
#include "scg/losses.hpp"
#include "scg/networks.hpp"
#include "scg/rng.hpp"

namespace scg {

namespace {

Tensor seeded(Shape shape, std::uint64_t seed, double stddev = 1.0, bool requires_grad = false) {
  Rng rng(seed);
  return randn(std::move(shape), rng, stddev, requires_grad);
}

PsfLevel random_psf_level(int level, std::size_t c, std::size_t h, std::size_t w, std::size_t k, Rng& rng) {
  PsfLevel p;
  p.level = level;
  p.k = k;
  p.channels = c;
  p.grid_height = h - k + 1;
  p.grid_width = w - k + 1;
  std::normal_distribution<double> dist(0.0, 1.0);
  p.patches.resize(p.grid_height * p.grid_width * p.dim());
  for (float& v : p.patches) v = static_cast<float>(dist(rng));
  p.mask.assign(p.grid_height * p.grid_width, 1);
  for (std::size_t j = 0; j < p.mask.size(); j += 4) p.mask[j] = 0;
  return p;
}

// Moves every element at least `gap` away from +1 and -1.
void off_kinks(Tensor& t, double gap = 1e-3) {
  for (double& v : t.mutable_data())
    if (std::fabs(std::fabs(v) - 1.0) < gap) v += 10 * gap;
}

class Suite {
 public:
  explicit Suite(double tol) : tol_(tol) {}

  void input(const std::string& name, const std::function<Tensor(const Tensor&)>& f, const Tensor& x) {
    add(name, grad_check(f, x), x.numel());
  }
  void params(const std::string& family, const std::function<Tensor()>& loss, const std::vector<NamedTensor>& ps,
              std::size_t samples, std::uint64_t seed, double step = 1e-5) {
    for (const auto& c : grad_check_params(loss, ps, step, samples, seed))
      add(family + ":" + c.name, c.max_rel_error, c.checked);
  }
  std::vector<GradientCheckResult> take() { return std::move(out_); }

 private:
  void add(const std::string& name, double err, std::size_t n) { out_.push_back({name, err, n, err <= tol_}); }
  double tol_;
  std::vector<GradientCheckResult> out_;
};

}  // namespace

std::vector<GradientCheckResult> run_gradient_suite(double tolerance, std::uint64_t seed) {
  Suite suite(tolerance);
  Rng rng(derive_seed(seed, {1}));

  // Feature losses over three levels with masked patches.
  std::vector<LevelTensor> pred;
  PseudoSketchFeature psf;
  const std::size_t dims[3][3] = {{3, 7, 6}, {4, 5, 5}, {4, 3, 4}};
  for (int i = 0; i < 3; ++i) {
    pred.push_back({3 + i, seeded({dims[i][0], dims[i][1], dims[i][2]}, derive_seed(seed, {2, std::uint64_t(i)}))});
    psf.levels.push_back(random_psf_level(3 + i, dims[i][0], dims[i][1], dims[i][2], 3, rng));
  }
  for (std::size_t l = 0; l < 3; ++l) {
    auto with = [&](const Tensor& m) {
      std::vector<LevelTensor> p = pred;
      p[l].map = m;
      return p;
    };
    const std::string lvl = std::to_string(3 + l);
    suite.input("psf_loss:level" + lvl, [&](const Tensor& m) { return psf_loss(with(m), psf); }, pred[l].map);
    suite.input("style_loss:level" + lvl, [&](const Tensor& m) { return style_loss(with(m), psf); }, pred[l].map);
  }

  // Noise-injected cycle loss through two toy conv generators.
  const Tensor photo = seeded({1, 1, 5, 5}, derive_seed(seed, {3}));
  const Tensor w1 = seeded({1, 1, 3, 3}, derive_seed(seed, {4}), 0.5, true);
  const Tensor w2 = seeded({1, 1, 3, 3}, derive_seed(seed, {5}), 0.5, true);
  const Generator g1 = [&](const Tensor& x) { return tanh(conv2d(x, w1, 1, 1)); };
  const Generator g2 = [&](const Tensor& x) { return conv2d(x, w2, 1, 1); };
  const NoiseSpec noise{0.1, derive_seed(seed, {6})};
  suite.params("cycle_noise_loss", [&] { return cycle_noise_loss(photo, g1, g2, noise).loss; },
               {{"g_p2s", w1}, {"g_s2p", w2}}, 0, seed);
  suite.input("cycle_noise_loss:photo", [&](const Tensor& x) { return cycle_noise_loss(x, g1, g2, noise).loss; },
              photo);

  // Unpaired cycle losses, squared L2 (the L1 form is checked off its kink).
  const Tensor sketch = seeded({1, 1, 5, 5}, derive_seed(seed, {7}));
  for (auto [norm, label] : {std::pair{CycleNorm::L2, "l2"}, std::pair{CycleNorm::L1, "l1"}}) {
    const CycleOptions opts{norm, Reduction::Sum};
    suite.params(std::string("unpaired_cycle_") + label,
                 [&] {
                   const CyclePair c = unpaired_cycle_losses(photo, sketch, g1, g2, opts);
                   return add(c.photo_term, c.sketch_term);
                 },
                 {{"g_p2s", w1}, {"g_s2p", w2}}, 0, seed);
  }

  // Hinge losses away from the kinks at +-1.
  Tensor real = seeded({2, 1, 4, 4}, derive_seed(seed, {8}), 2.0);
  Tensor fake = seeded({2, 1, 4, 4}, derive_seed(seed, {9}), 2.0);
  off_kinks(real);
  off_kinks(fake);
  suite.input("hinge_g_loss:fake", [](const Tensor& x) { return hinge_g_loss(x); }, fake);
  suite.input("hinge_d_loss:real", [&](const Tensor& x) { return hinge_d_loss(x, fake); }, real);
  suite.input("hinge_d_loss:fake", [&](const Tensor& x) { return hinge_d_loss(real, x); }, fake);

  // Network families: every parameter group is sampled. A ReLU input within
  // 1e-5 of zero is common in these tiny instance-normalized maps, so the
  // parameter differences use a smaller step.
  const GeneratorNet gen(GeneratorSpec{2, 1, 3, 1, 1}, derive_seed(seed, {10}), "generator/");
  const Tensor gx = seeded({1, 2, 8, 8}, derive_seed(seed, {11}));
  const Tensor gt = seeded({1, 1, 8, 8}, derive_seed(seed, {12}), 0.5);
  auto gen_loss = [&](const Tensor& in) { return sum_squares(sub(gen(in), gt)); };
  suite.input("generator:input", gen_loss, gx);
  suite.params("generator", [&] { return gen_loss(gx); }, gen.parameters(), 6, seed, 1e-6);

  const DiscriminatorNet disc(DiscriminatorSpec{1, 3, 2}, derive_seed(seed, {13}), "discriminator/");
  const Tensor dx = seeded({1, 1, 8, 8}, derive_seed(seed, {14}));
  const Tensor dw = seeded({1, 1, 2, 2}, derive_seed(seed, {15}));
  auto disc_loss = [&](const Tensor& in) { return sum(mul(disc(in), dw)); };
  suite.input("discriminator:input", disc_loss, dx);
  suite.params("discriminator", [&] { return disc_loss(dx); }, disc.parameters(), 6, seed, 1e-6);
  return suite.take();
}

}  // namespace scg
