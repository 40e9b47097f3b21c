#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "scg/adam.hpp"
#include "scg/features.hpp"
#include "scg/losses.hpp"
#include "scg/matching.hpp"
#include "scg/networks.hpp"
#include "scg/reference_store.hpp"
#include "scg/synthetic.hpp"

namespace scg {

struct TrainConfig {
  std::size_t epochs = 20;
  std::size_t decay_start_epoch = 10;
  std::size_t batch_size = 2;
  double lr_g = 0.001;
  double lr_d = 0.004;
  double beta1 = 0.9;
  double beta2 = 0.999;
  LossWeights weights;
  double noise_pixels = kDefaultNoisePixels;  // sigma in 8-bit pixel units
  std::size_t k = 3;
  std::size_t candidates = kDefaultCandidates;
  std::vector<int> loss_levels{3, 4, 5};
  std::uint64_t seed = 0;
  // Seed of the toy feature extractor the reference store must match.
  std::uint64_t extractor_seed = 0;
  std::size_t checkpoint_interval = 1;  // epochs
  std::size_t image_size = 64;
  // 0 derives one pass over the photo pool per epoch.
  std::size_t steps_per_epoch = 0;
  GeneratorSpec generator;
  DiscriminatorSpec discriminator;
  // Round parameters and Adam moments to float after every update, so a
  // float32 checkpoint resumes the run exactly.
  bool float32_storage = true;

  // Raises ConfigError on any violated invariant.
  void validate() const;
  double sigma() const { return noise_pixels * 2.0 / 255.0; }
};

// Learning rates for `epoch`: constant before the decay start, then linear
// down to zero at `epochs`.
std::pair<double, double> lr_schedule(std::size_t epoch, const TrainConfig& config);

struct PhotoItem {
  std::string id;
  Tensor photo;  // [3, H, W]
};

struct TrainingData {
  std::vector<ImagePair> reference;  // supplies reference photos and every real sketch
  std::vector<PhotoItem> extra_photos;
};

struct Batch {
  std::uint64_t seed = 0;
  std::vector<std::size_t> photo_indices;  // into the photo pool
  std::vector<std::string> photo_ids;
  Tensor photos;        // [B, 3, H, W]
  Tensor real_sketches; // [B, 1, H, W], reference sketches for D_s only
};

struct LossReport {
  std::size_t step = 0;
  std::size_t epoch = 0;
  double psf = 0, style = 0, cycle = 0, g_adv = 0, d = 0;
  double lr_g = 0, lr_d = 0;
  std::uint64_t batch_seed = 0;
};

// Tab-separated: step, epoch, L_p, L_sty, L_cyc, L_G_adv, L_D, lr_g, lr_d.
std::string log_header();
std::string log_line(const LossReport& r);

class Trainer {
 public:
  // Builds all four networks from `config.seed`. The store must come from
  // `extractor` (IncompatibleError otherwise) and hold every loss level.
  Trainer(TrainConfig config, const FeatureExtractor& extractor, const ReferencePatchStore& store,
          TrainingData data);

  const TrainConfig& config() const { return config_; }
  std::size_t global_step() const { return step_; }
  std::size_t steps_per_epoch() const { return steps_per_epoch_; }
  std::size_t total_steps() const { return steps_per_epoch_ * config_.epochs; }
  std::size_t epoch() const { return step_ / steps_per_epoch_; }
  std::size_t pool_size() const { return pool_.size(); }

  // Batch for global step `step`, a pure function of (seed, step).
  Batch make_batch(std::size_t step) const;

  // Generator-side components (L_p, L_sty, L_cyc, hinge terms) for a batch,
  // with noise drawn from the batch seed. Parameters are not touched.
  LossComponents generator_components(const Batch& batch) const;

  // One discriminator update followed by one generator update. Raises
  // NumericError naming the batch seed if any loss is not finite.
  LossReport step();
  // Runs until `total_steps()` or `max_steps` more steps, whichever is first.
  std::vector<LossReport> train(std::size_t max_steps,
                                const std::function<void(const LossReport&)>& on_step = {});

  // Pseudo sketch feature of a pool photo, computed once per id.
  const PseudoSketchFeature& psf_for(std::size_t pool_index) const;

  // Sketch [1,H,W] from a photo [3,H,W] and back, single pass, no noise.
  // Sizes not divisible by the generator stride are edge-padded and cropped.
  Tensor infer_p2s(const Tensor& photo) const;
  Tensor infer_s2p(const Tensor& sketch) const;

  // Networks, both optimizer states and the step counter.
  std::vector<NamedTensor> state_tensors() const;
  void save(const std::filesystem::path& path) const;
  // All-or-nothing: on any mismatch nothing is modified.
  void load(const std::filesystem::path& path);

  const GeneratorNet& g_p2s() const { return g_p2s_; }
  const GeneratorNet& g_s2p() const { return g_s2p_; }
  const DiscriminatorNet& d_s() const { return d_s_; }
  const DiscriminatorNet& d_p() const { return d_p_; }
  std::vector<NamedTensor> generator_parameters() const;
  std::vector<NamedTensor> discriminator_parameters() const;

 private:
  struct GeneratorPass;
  GeneratorPass run_generators(const Batch& batch) const;

  TrainConfig config_;
  const FeatureExtractor& extractor_;
  const ReferencePatchStore& store_;
  std::vector<PhotoItem> pool_;  // reference photos first, then extras
  std::vector<Tensor> reference_sketches_;
  std::size_t steps_per_epoch_ = 1;
  GeneratorNet g_p2s_, g_s2p_;
  DiscriminatorNet d_s_, d_p_;
  Adam opt_g_, opt_d_;
  std::size_t step_ = 0;
  mutable std::map<std::size_t, PseudoSketchFeature> psf_cache_;
};

// 32x32 profile on the synthetic pair task: losses on levels 3 and 4, a
// narrow generator, 10 epochs of 20 steps.
TrainConfig smoke_train_config();

// Items [0, reference_count) become reference pairs "ref_i"; the next
// extra_count items contribute photos only, "photo_i".
TrainingData synthetic_training_data(const SyntheticDomainSpec& spec, std::size_t reference_count,
                                     std::size_t extra_count);

// Single forward pass of `g` on an image [C,H,W], clamped to [-1, 1]. Sizes
// not divisible by the generator stride are edge-padded and cropped back, or
// rejected with DimensionError when `allow_padding` is false.
Tensor run_generator(const GeneratorNet& g, const Tensor& image, bool allow_padding = true);

// Pads [B,C,H,W] by edge replication on the bottom and right to multiples of
// `multiple`, and the inverse crop.
Tensor pad_to_multiple(const Tensor& x, std::size_t multiple);
Tensor crop_to(const Tensor& x, std::size_t height, std::size_t width);

}  // namespace scg
