#include "scg/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include "scg/checkpoint.hpp"
#include "scg/error.hpp"
#include "scg/rng.hpp"

namespace scg {

void TrainConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (epochs == 0) fail("epochs must be at least 1");
  if (decay_start_epoch > epochs) fail("decay_start_epoch must not exceed epochs");
  if (batch_size == 0) fail("batch_size must be at least 1");
  if (!(lr_g > 0.0) || !std::isfinite(lr_g) || !(lr_d > 0.0) || !std::isfinite(lr_d)) {
    fail("learning rates must be positive");
  }
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0)) fail("betas must lie in [0, 1)");
  weights.validate();
  if (!(noise_pixels >= 0.0) || !std::isfinite(noise_pixels)) fail("noise sigma must be non-negative");
  if (k == 0) fail("patch size k must be at least 1");
  if (candidates == 0) fail("candidate count n must be at least 1");
  if (loss_levels.empty()) fail("loss_levels must not be empty");
  std::set<int> seen;
  for (int l : loss_levels) {
    if (l < 3 || l > 5) fail("loss level " + std::to_string(l) + " is not one of 3, 4, 5");
    if (!seen.insert(l).second) fail("loss level " + std::to_string(l) + " listed twice");
  }
  if (checkpoint_interval == 0) fail("checkpoint_interval must be at least 1");
  const std::size_t stride = std::size_t{1} << generator.downsample_stages;
  if (image_size == 0 || image_size % stride != 0) {
    fail("image_size must be a positive multiple of " + std::to_string(stride));
  }
  if (image_size < (std::size_t{1} << discriminator.layers)) fail("image_size is below the discriminator stride");
}

std::pair<double, double> lr_schedule(std::size_t epoch, const TrainConfig& c) {
  if (epoch >= c.epochs) {
    throw ContractError("epoch " + std::to_string(epoch) + " outside [0, " + std::to_string(c.epochs) + ")");
  }
  if (epoch < c.decay_start_epoch) return {c.lr_g, c.lr_d};
  const double f = static_cast<double>(c.epochs - epoch) / static_cast<double>(c.epochs - c.decay_start_epoch);
  return {c.lr_g * f, c.lr_d * f};
}

std::string log_header() { return "step\tepoch\tL_p\tL_sty\tL_cyc\tL_G_adv\tL_D\tlr_g\tlr_d"; }

std::string log_line(const LossReport& r) {
  char buf[256];
  std::snprintf(buf, sizeof buf, "%zu\t%zu\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g\t%.9g", r.step, r.epoch, r.psf, r.style,
                r.cycle, r.g_adv, r.d, r.lr_g, r.lr_d);
  return buf;
}

namespace {

constexpr std::uint64_t kBatchStream = 0x62;
constexpr std::uint64_t kNoiseStream = 0x6e;

void require_image(const Tensor& t, std::size_t channels, std::size_t size, const std::string& what) {
  if (!t.defined() || t.shape() != Shape{channels, size, size}) {
    throw DimensionError(what + " must be [" + std::to_string(channels) + "," + std::to_string(size) + "," +
                         std::to_string(size) + "], got " + (t.defined() ? shape_str(t.shape()) : "nothing"));
  }
}

Tensor stack(const std::vector<const Tensor*>& items) {
  const Shape& s = items.front()->shape();
  std::vector<double> data;
  data.reserve(items.size() * items.front()->numel());
  for (const Tensor* t : items) data.insert(data.end(), t->data().begin(), t->data().end());
  Shape out{items.size()};
  out.insert(out.end(), s.begin(), s.end());
  return Tensor::from_data(std::move(out), std::move(data));
}

std::vector<NamedTensor> concat_params(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  std::vector<NamedTensor> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

GeneratorSpec oriented(GeneratorSpec spec, std::size_t in, std::size_t out) {
  spec.in_channels = in;
  spec.out_channels = out;
  return spec;
}

DiscriminatorSpec with_input(DiscriminatorSpec spec, std::size_t in) {
  spec.in_channels = in;
  return spec;
}

void fill_missing_grads(const std::vector<NamedTensor>& params) {
  for (const auto& p : params)
    if (!p.tensor.has_grad()) Tensor(p.tensor).mutable_grad();
}

Tensor step_scalar(std::size_t v) { return Tensor::from_data({1}, {static_cast<double>(v)}); }

}  // namespace

struct Trainer::GeneratorPass {
  Tensor fake_sketch;     // G_p2s(p)
  Tensor reconstruction;  // G_s2p(G_p2s(p) + sigma z)
  LossComponents components;
};

Trainer::Trainer(TrainConfig config, const FeatureExtractor& extractor, const ReferencePatchStore& store,
                 TrainingData data)
    : config_(std::move(config)),
      extractor_(extractor),
      store_(store),
      g_p2s_(oriented(config_.generator, 3, 1), derive_seed(config_.seed, {1}), "g_p2s/"),
      g_s2p_(oriented(config_.generator, 1, 3), derive_seed(config_.seed, {2}), "g_s2p/"),
      d_s_(with_input(config_.discriminator, 1), derive_seed(config_.seed, {3}), "d_s/"),
      d_p_(with_input(config_.discriminator, 3), derive_seed(config_.seed, {4}), "d_p/"),
      opt_g_(concat_params(g_p2s_.parameters(), g_s2p_.parameters()),
             AdamOptions{config_.lr_g, config_.beta1, config_.beta2, 1e-8, config_.float32_storage}),
      opt_d_(concat_params(d_s_.parameters(), d_p_.parameters()),
             AdamOptions{config_.lr_d, config_.beta1, config_.beta2, 1e-8, config_.float32_storage}) {
  config_.validate();
  if (data.reference.empty()) throw ContractError("training needs at least one reference pair");
  if (store_.fingerprint() != extractor_.fingerprint()) {
    throw IncompatibleError("reference store was built with a different feature extractor");
  }
  if (store_.k() != config_.k) {
    throw IncompatibleError("reference store uses k=" + std::to_string(store_.k()) + " but the config asks for k=" +
                            std::to_string(config_.k));
  }
  const bool feature_losses = config_.weights.lambda_p > 0.0 || config_.weights.lambda_sty > 0.0;
  if (feature_losses) {
    if (!extractor_.differentiable()) {
      throw ContractError("feature losses need a differentiable extractor; file-backed features are fixed");
    }
    for (int l : config_.loss_levels)
      if (!store_.has_level(l)) throw ContractError("reference store has no bank for loss level " + std::to_string(l));
  }

  std::set<std::string> ids;
  const std::size_t s = config_.image_size;
  for (std::size_t i = 0; i < data.reference.size(); ++i) {
    auto& p = data.reference[i];
    require_image(p.photo, 3, s, "reference photo " + p.id);
    require_image(p.sketch, 1, s, "reference sketch " + p.id);
    if (!ids.insert(p.id).second) throw ContractError("duplicate image id " + p.id);
    pool_.push_back({p.id, p.photo});
    reference_sketches_.push_back(p.sketch);
  }
  for (auto& p : data.extra_photos) {
    require_image(p.photo, 3, s, "photo " + p.id);
    if (!ids.insert(p.id).second) throw ContractError("duplicate image id " + p.id);
    pool_.push_back(std::move(p));
  }
  steps_per_epoch_ = config_.steps_per_epoch > 0 ? config_.steps_per_epoch
                                                  : (pool_.size() + config_.batch_size - 1) / config_.batch_size;
}

Batch Trainer::make_batch(std::size_t step) const {
  Batch b;
  b.seed = derive_seed(config_.seed, {kBatchStream, step});
  Rng rng(b.seed);
  std::uniform_int_distribution<std::size_t> photo_pick(0, pool_.size() - 1);
  std::uniform_int_distribution<std::size_t> sketch_pick(0, reference_sketches_.size() - 1);
  std::vector<const Tensor*> photos, sketches;
  for (std::size_t i = 0; i < config_.batch_size; ++i) {
    const std::size_t j = photo_pick(rng);
    b.photo_indices.push_back(j);
    b.photo_ids.push_back(pool_[j].id);
    photos.push_back(&pool_[j].photo);
  }
  for (std::size_t i = 0; i < config_.batch_size; ++i) sketches.push_back(&reference_sketches_[sketch_pick(rng)]);
  b.photos = stack(photos);
  b.real_sketches = stack(sketches);
  return b;
}

const PseudoSketchFeature& Trainer::psf_for(std::size_t pool_index) const {
  auto it = psf_cache_.find(pool_index);
  if (it != psf_cache_.end()) return it->second;
  const PhotoItem& item = pool_.at(pool_index);
  const FeaturePyramid pyramid = extractor_.extract(item.photo, item.id);
  PsfOptions opts;
  opts.levels = config_.loss_levels;
  opts.candidates = config_.candidates;
  return psf_cache_.emplace(pool_index, build_psf(pyramid, store_, opts)).first->second;
}

Trainer::GeneratorPass Trainer::run_generators(const Batch& batch) const {
  GeneratorPass pass;
  const std::size_t B = batch.photos.dim(0);
  const double per_sample = 1.0 / static_cast<double>(B);
  pass.fake_sketch = g_p2s_(batch.photos);

  const LossWeights& w = config_.weights;
  if (w.lambda_p > 0.0 || w.lambda_sty > 0.0) {
    const std::vector<Tensor> feats = extractor_.forward(pass.fake_sketch);
    Tensor lp, lsty;
    for (std::size_t b = 0; b < B; ++b) {
      std::vector<LevelTensor> pred;
      for (int l : config_.loss_levels) {
        const Tensor& f = feats.at(static_cast<std::size_t>(l - kPyramidLevels.front()));
        pred.push_back({l, slice(f, 0, b, b + 1)});
      }
      const PseudoSketchFeature& psf = psf_for(batch.photo_indices.at(b));
      if (w.lambda_p > 0.0) {
        const Tensor t = psf_loss(pred, psf);
        lp = lp.defined() ? add(lp, t) : t;
      }
      if (w.lambda_sty > 0.0) {
        const Tensor t = style_loss(pred, psf);
        lsty = lsty.defined() ? add(lsty, t) : t;
      }
    }
    if (lp.defined()) pass.components.psf = scale(lp, per_sample);
    if (lsty.defined()) pass.components.style = scale(lsty, per_sample);
  }

  Rng noise_rng(derive_seed(batch.seed, {kNoiseStream}));
  // The only input G_s2p ever receives: a generated sketch plus noise.
  const Tensor noisy = inject_noise(pass.fake_sketch, config_.sigma(), noise_rng);
  pass.reconstruction = g_s2p_(noisy);
  pass.components.cycle = scale(sum_squares(sub(pass.reconstruction, batch.photos)), per_sample);
  return pass;
}

LossComponents Trainer::generator_components(const Batch& batch) const {
  GeneratorPass pass = run_generators(batch);
  pass.components.g_p2s = hinge_g_loss(d_s_(pass.fake_sketch));
  pass.components.g_s2p = hinge_g_loss(d_p_(pass.reconstruction));
  return pass.components;
}

LossReport Trainer::step() {
  if (step_ >= total_steps()) throw ContractError("training schedule already finished");
  LossReport r;
  r.step = step_;
  r.epoch = epoch();
  std::tie(r.lr_g, r.lr_d) = lr_schedule(r.epoch, config_);
  opt_g_.set_lr(r.lr_g);
  opt_d_.set_lr(r.lr_d);

  const Batch batch = make_batch(step_);
  r.batch_seed = batch.seed;
  auto check = [&](const char* name, double v) {
    if (!std::isfinite(v)) {
      std::ostringstream msg;
      msg << name << " is not finite at step " << step_ << " (batch seed " << batch.seed << ", photos";
      for (const auto& id : batch.photo_ids) msg << ' ' << id;
      msg << ")";
      throw NumericError(msg.str());
    }
    return v;
  };

  GeneratorPass pass = run_generators(batch);

  // Discriminator update on detached generator outputs.
  opt_d_.zero_grad();
  const Tensor ld = add(hinge_d_loss(d_s_(batch.real_sketches), d_s_(pass.fake_sketch.detach())),
                        hinge_d_loss(d_p_(batch.photos), d_p_(pass.reconstruction.detach())));
  r.d = check("L_D", ld.item());
  backward(ld);
  fill_missing_grads(opt_d_.params());
  opt_d_.step();

  // Generator update against the freshly updated discriminators.
  opt_g_.zero_grad();
  LossComponents& c = pass.components;
  c.g_p2s = hinge_g_loss(d_s_(pass.fake_sketch));
  c.g_s2p = hinge_g_loss(d_p_(pass.reconstruction));
  if (c.psf.defined()) r.psf = check("L_p", c.psf.item());
  if (c.style.defined()) r.style = check("L_sty", c.style.item());
  r.cycle = check("L_cyc", c.cycle.item());
  r.g_adv = check("L_G_adv", c.g_p2s.item() + c.g_s2p.item());
  const TotalLosses totals = total_losses(c, config_.weights);
  if (totals.generator.defined()) {
    check("L_G", totals.generator.item());
    backward(totals.generator);
  }
  fill_missing_grads(opt_g_.params());
  opt_g_.step();
  ++step_;
  return r;
}

std::vector<LossReport> Trainer::train(std::size_t max_steps, const std::function<void(const LossReport&)>& on_step) {
  std::vector<LossReport> out;
  while (out.size() < max_steps && step_ < total_steps()) {
    out.push_back(step());
    if (on_step) on_step(out.back());
  }
  return out;
}

Tensor pad_to_multiple(const Tensor& x, std::size_t multiple) {
  if (x.rank() != 4) throw DimensionError("pad_to_multiple expects [B,C,H,W]");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::size_t Hp = (H + multiple - 1) / multiple * multiple, Wp = (W + multiple - 1) / multiple * multiple;
  if (Hp == H && Wp == W) return x;
  std::vector<double> out(B * C * Hp * Wp);
  auto d = x.data();
  for (std::size_t p = 0; p < B * C; ++p)
    for (std::size_t y = 0; y < Hp; ++y)
      for (std::size_t xx = 0; xx < Wp; ++xx)
        out[(p * Hp + y) * Wp + xx] = d[(p * H + std::min(y, H - 1)) * W + std::min(xx, W - 1)];
  return Tensor::from_data({B, C, Hp, Wp}, std::move(out));
}

Tensor crop_to(const Tensor& x, std::size_t height, std::size_t width) {
  if (x.rank() != 4 || x.dim(2) < height || x.dim(3) < width) throw DimensionError("crop_to: bad crop size");
  const std::size_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  std::vector<double> out(B * C * height * width);
  auto d = x.data();
  for (std::size_t p = 0; p < B * C; ++p)
    for (std::size_t y = 0; y < height; ++y)
      for (std::size_t xx = 0; xx < width; ++xx) out[(p * height + y) * width + xx] = d[(p * H + y) * W + xx];
  return Tensor::from_data({B, C, height, width}, std::move(out));
}

Tensor run_generator(const GeneratorNet& g, const Tensor& image, bool allow_padding) {
  const std::size_t channels = g.spec().in_channels;
  if (image.rank() != 3 || image.dim(0) != channels) {
    throw DimensionError("expected a [" + std::to_string(channels) + ",H,W] image, got " + shape_str(image.shape()));
  }
  const std::size_t H = image.dim(1), W = image.dim(2), stride = std::size_t{1} << g.spec().downsample_stages;
  if (!allow_padding && (H % stride != 0 || W % stride != 0)) {
    throw DimensionError("image " + std::to_string(W) + "x" + std::to_string(H) + " is not divisible by " +
                         std::to_string(stride) + " and padding is disabled");
  }
  const Tensor x = pad_to_multiple(reshape(image.detach(), {1, channels, H, W}), stride);
  Tensor y = crop_to(g(x).detach(), H, W);
  for (double& v : y.mutable_data()) v = std::clamp(v, -1.0, 1.0);
  return reshape(y, {y.dim(1), H, W}).detach();
}

Tensor Trainer::infer_p2s(const Tensor& photo) const { return run_generator(g_p2s_, photo); }
Tensor Trainer::infer_s2p(const Tensor& sketch) const { return run_generator(g_s2p_, sketch); }

std::vector<NamedTensor> Trainer::generator_parameters() const {
  return concat_params(g_p2s_.parameters(), g_s2p_.parameters());
}

std::vector<NamedTensor> Trainer::discriminator_parameters() const {
  return concat_params(d_s_.parameters(), d_p_.parameters());
}

std::vector<NamedTensor> Trainer::state_tensors() const {
  if (step_ >= (std::size_t{1} << 24)) throw ContractError("step counter exceeds the checkpoint's exact range");
  std::vector<NamedTensor> out = concat_params(generator_parameters(), discriminator_parameters());
  for (auto& t : opt_g_.state_tensors("adam_g/")) out.push_back(std::move(t));
  for (auto& t : opt_d_.state_tensors("adam_d/")) out.push_back(std::move(t));
  out.push_back({"trainer/step", step_scalar(step_)});
  out.push_back({"adam_g/step", step_scalar(opt_g_.state().step)});
  out.push_back({"adam_d/step", step_scalar(opt_d_.state().step)});
  return out;
}

void Trainer::save(const std::filesystem::path& path) const { save_checkpoint(path, state_tensors()); }

void Trainer::load(const std::filesystem::path& path) {
  const std::vector<NamedTensor> loaded = read_checkpoint(path);
  const std::vector<NamedTensor> targets = state_tensors();
  assign_checkpoint(loaded, targets);
  auto counter = [&](const std::string& name) {
    for (const auto& t : targets)
      if (t.name == name) return static_cast<std::size_t>(t.tensor.item());
    return std::size_t{0};
  };
  step_ = counter("trainer/step");
  opt_g_.restore_step(counter("adam_g/step"));
  opt_d_.restore_step(counter("adam_d/step"));
}

TrainConfig smoke_train_config() {
  TrainConfig c;
  c.image_size = 32;
  c.loss_levels = {3, 4};
  c.epochs = 10;
  c.decay_start_epoch = 10;
  c.steps_per_epoch = 20;
  c.generator.width = 8;
  c.generator.residual_blocks = 2;
  c.discriminator.width = 8;
  return c;
}

TrainingData synthetic_training_data(const SyntheticDomainSpec& spec, std::size_t reference_count,
                                     std::size_t extra_count) {
  TrainingData d;
  const auto items = gen_synthetic_domains(spec, reference_count + extra_count);
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (i < reference_count) {
      d.reference.push_back({"ref_" + std::to_string(i), items[i].photo, items[i].sketch});
    } else {
      d.extra_photos.push_back({"photo_" + std::to_string(i), items[i].photo});
    }
  }
  return d;
}

}  // namespace scg
