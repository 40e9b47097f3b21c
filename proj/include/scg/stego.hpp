#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "scg/losses.hpp"
#include "scg/networks.hpp"
#include "scg/synthetic.hpp"

namespace scg {

struct StegoConfig {
  std::size_t image_size = 32;
  std::size_t hue_classes = 8;
  std::size_t train_count = 512;
  std::size_t held_out_count = 128;

  // Cycle training. Every run with the same seed sees the same data,
  // initialization and batches; only sigma differs.
  std::size_t steps = 600;
  std::size_t batch_size = 4;
  double lr_g = 0.001;
  double lr_d = 0.004;
  double beta1 = 0.5;
  double beta2 = 0.999;
  // With a mean L1 cycle both generators settle on the per-pixel median
  // (blank sketch, grey photo) and no attribute crosses the cycle. Mean L2
  // at this weight keeps the cycle informative against the discriminators.
  double lambda_cyc = 50.0;
  double lambda_adv = 1.0;
  CycleOptions cycle{CycleNorm::L2, Reduction::Mean};
  GeneratorSpec generator{3, 1, 8, 2, 2};
  DiscriminatorSpec discriminator{1, 8, 3};

  // Probe classifier trained on train-split sketches, scored on held-out.
  std::size_t probe_steps = 400;
  std::size_t probe_batch = 32;
  double probe_lr = 0.005;
  std::size_t probe_width = 8;

  void validate() const;
};

// Errors are 1 - accuracy on the held-out split; chance error is
// 1 - 1/hue_classes.
struct StegoReport {
  double sigma_pixels = 0.0;
  std::uint64_t seed = 0;
  // Probe on the sketches G_s2p receives during training, G_p2s(p) + sigma z.
  double probe_err_generated = 0.0;
  double probe_err_true = 0.0;
  // Mean absolute per-pixel error of G_s2p(G_p2s(p)) against p, no noise.
  double cycle_err = 0.0;
  bool diverged = false;

  // Probe on noise-free generated sketches.
  double probe_err_clean = 0.0;
  // Hue class read back from G_s2p(G_p2s(p)) by nearest hue.
  double recovery_err = 0.0;
  double final_cycle_loss = 0.0;
  double final_d_loss = 0.0;
  std::size_t steps = 0;
  std::size_t held_out = 0;
  double seconds = 0.0;
};

struct StegoDataset {
  std::vector<SyntheticItem> train;
  std::vector<SyntheticItem> held_out;
};

// Train and held-out items from disjoint index ranges of one synthetic spec.
StegoDataset make_stego_dataset(const StegoConfig& config, std::uint64_t seed);

struct StegoRun {
  StegoReport report;
  GeneratorNet g_p2s;
  GeneratorNet g_s2p;
};

// Unpaired cycle training with adversarial hinge losses and noise injection
// into the photo cycle, followed by the probe measurements.
StegoRun run_plain_cycle(const StegoDataset& data, const StegoConfig& config, double sigma_pixels,
                         std::uint64_t seed);

// Held-out accuracy of a freshly trained probe that predicts the attribute
// from [N,1,S,S] inputs.
double probe_accuracy(const Tensor& train_inputs, const std::vector<std::size_t>& train_labels,
                      const Tensor& test_inputs, const std::vector<std::size_t>& test_labels,
                      const StegoConfig& config, std::uint64_t seed);

// Nearest hue class of the mean colour over the shape pixels of `geometry`.
std::size_t read_hue(const Tensor& photo, const Geometry& geometry, std::size_t hue_classes);

// Upper accuracy bound for "at chance": 1/classes + 3 standard errors of a
// proportion at chance over `samples` trials.
double chance_accuracy_bound(std::size_t classes, std::size_t samples);

// One run per (sigma, seed). A diverged run is reported and retried once
// with seed + 1000. `on_run` sees every finished run with its dataset.
std::vector<StegoReport> noise_sweep(
    const StegoConfig& config, const std::vector<double>& sigmas, const std::vector<std::uint64_t>& seeds,
    const std::function<void(const StegoRun&, const StegoDataset&)>& on_run = {});

// Header: sigma, seed, probe_err_generated, probe_err_true, cycle_err, diverged.
void write_stego_table(const std::filesystem::path& path, const std::vector<StegoReport>& reports);
// Every StegoReport field.
void write_stego_details(const std::filesystem::path& path, const std::vector<StegoReport>& reports);
// Per-sigma means of probe error (generated and true) and cycle error.
void write_stego_plot(const std::filesystem::path& path, const std::vector<StegoReport>& reports);

// Photo, generated sketch and reconstruction side by side.
Tensor stego_triptych(const StegoRun& run, const SyntheticItem& item);

}  // namespace scg
