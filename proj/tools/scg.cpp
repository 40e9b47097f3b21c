// scg: command-line front end for the sketch/photo translation library.
//
// Exit codes: 0 success, 1 runtime failure, 2 input error (bad flags,
// config, dataset, image shape or file), 3 compatibility error (fingerprint
// or checkpoint mismatch).

#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include "scg/binary_io.hpp"
#include "scg/checkpoint.hpp"
#include "scg/config.hpp"
#include "scg/dataset.hpp"
#include "scg/error.hpp"
#include "scg/features.hpp"
#include "scg/gradient_suite.hpp"
#include "scg/image_io.hpp"
#include "scg/matching.hpp"
#include "scg/reference_store.hpp"
#include "scg/ssim.hpp"
#include "scg/stego.hpp"
#include "scg/synthetic.hpp"
#include "scg/trainer.hpp"

namespace fs = std::filesystem;
using namespace scg;

namespace {

constexpr int kExitOk = 0, kExitRuntime = 1, kExitInput = 2, kExitIncompatible = 3;

FeatureExtractor toy_extractor(std::uint64_t seed) {
  ExtractorSpec spec;
  spec.seed = seed;
  return FeatureExtractor(spec);
}

std::size_t level_downsample(const FeatureExtractor& extractor, int level) {
  return extractor.spec().level_downsample.at(static_cast<std::size_t>(level - kPyramidLevels.front()));
}

std::vector<int> parse_int_list(const std::string& text) {
  std::vector<int> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stoi(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("malformed integer '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  std::stringstream ss(text);
  std::string item;
  while (std::getline(ss, item, ',')) {
    try {
      std::size_t used = 0;
      out.push_back(std::stod(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw ConfigError("malformed number '" + item + "' in list '" + text + "'");
    }
  }
  if (out.empty()) throw ConfigError("empty list");
  return out;
}

// "1..5" or "1,2,7".
std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  const auto dots = text.find("..");
  std::vector<std::uint64_t> out;
  try {
    if (dots != std::string::npos) {
      const std::uint64_t first = std::stoull(text.substr(0, dots));
      const std::uint64_t last = std::stoull(text.substr(dots + 2));
      if (last < first) throw ConfigError("seed range '" + text + "' is empty");
      for (std::uint64_t s = first; s <= last; ++s) out.push_back(s);
      return out;
    }
    for (int v : parse_int_list(text)) {
      if (v < 0) throw ConfigError("negative seed in '" + text + "'");
      out.push_back(static_cast<std::uint64_t>(v));
    }
  } catch (const std::invalid_argument&) {
    throw ConfigError("malformed seed list '" + text + "'");
  } catch (const std::out_of_range&) {
    throw ConfigError("malformed seed list '" + text + "'");
  }
  return out;
}

// Stacks [C, H, W] images of equal width top to bottom.
Tensor vconcat_images(const std::vector<Tensor>& rows) { return concat(rows, 1).detach(); }

// ---------------------------------------------------------------- build-ref

struct BuildRefArgs {
  fs::path data, out;
  std::size_t k = 3;
  std::uint64_t seed = 0;
  std::string levels;
};

std::vector<int> default_bank_levels(const FeatureExtractor& extractor, std::size_t image_size, std::size_t k) {
  std::vector<int> levels;
  for (int level : kPyramidLevels) {
    if (image_size / level_downsample(extractor, level) >= k) levels.push_back(level);
  }
  if (levels.empty()) {
    throw ConfigError("no pyramid level of a " + std::to_string(image_size) + "px image fits k=" + std::to_string(k));
  }
  return levels;
}

std::string input_digest(const BuildRefArgs& args, const std::vector<int>& levels, const DatasetLayout& layout,
                         const std::vector<ImagePair>& pairs) {
  ByteWriter w;
  w.put_bytes("build-ref v1\n");
  w.put_bytes("k=" + std::to_string(args.k) + "\nseed=" + std::to_string(args.seed) + "\nlevels=");
  for (int l : levels) w.put_bytes(std::to_string(l) + ",");
  w.put_bytes("\n");
  for (const ImagePair& p : pairs) {
    for (const DatasetEntry& e : layout.entries()) {
      if (e.stem != p.id) continue;
      w.put_bytes(e.stem + "\n");
      w.put_bytes(to_hex(sha256(read_file(e.photo))));
      w.put_bytes(to_hex(sha256(read_file(*e.sketch))));
    }
  }
  return to_hex(sha256(w.bytes()));
}

int cmd_build_ref(const BuildRefArgs& args) {
  const DatasetLayout layout = DatasetLayout::open(args.data, /*require_sketches=*/true);
  const std::vector<ImagePair> pairs = layout.load_pairs("train");
  if (pairs.empty()) throw DatasetError("no photo/sketch pairs in the train split of " + args.data.string());
  const FeatureExtractor extractor = toy_extractor(args.seed);
  const std::vector<int> levels = args.levels.empty()
                                      ? default_bank_levels(extractor, layout.height(), args.k)
                                      : parse_int_list(args.levels);

  const std::string digest = input_digest(args, levels, layout, pairs);
  const fs::path sidecar = fs::path(args.out.string() + ".sha256");
  if (fs::exists(args.out) && fs::exists(sidecar)) {
    std::string stored = read_file(sidecar);
    while (!stored.empty() && (stored.back() == '\n' || stored.back() == ' ')) stored.pop_back();
    if (stored == digest) {
      std::cout << "up to date: " << args.out.string() << "\n";
      return kExitOk;
    }
  }

  const ReferencePatchStore store = build_reference_store(pairs, extractor, args.k, levels);
  if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
  store.save(args.out);
  write_file_atomic(sidecar, digest + "\n");

  std::cout << "N=" << store.size() << " k=" << store.k() << "\n";
  for (const LevelBank& bank : store.banks()) {
    std::cout << "level " << bank.level << ": map " << bank.map_height << "x" << bank.map_width
              << ", m=" << bank.patches_per_ref << ", dim=" << bank.dim << "\n";
  }
  std::cout << "bytes=" << fs::file_size(args.out) << "\n";
  std::cout << "fingerprint=" << to_hex(store.fingerprint()) << "\n";
  return kExitOk;
}

// -------------------------------------------------------------------- train

struct TrainArgs {
  fs::path config, data, extra_photos, ref, out;
  bool dry_run = false;
  bool resume = false;
  std::size_t max_steps = 0;
};

std::vector<PhotoItem> load_extra_photos(const fs::path& dir) {
  std::vector<PhotoItem> out;
  std::vector<std::string> problems;
  for (const fs::path& p : list_png_files(dir)) {
    try {
      Tensor img = read_png(p);
      if (img.dim(0) == 1) img = concat({img, img, img}, 0).detach();
      out.push_back({"extra/" + p.stem().string(), img});
    } catch (const IoError& e) {
      problems.push_back(e.what());
    }
  }
  if (!problems.empty()) {
    std::string msg = "unreadable extra photos:";
    for (const auto& p : problems) msg += "\n  " + p;
    throw DatasetError(msg);
  }
  return out;
}

void write_sample_grid(const Trainer& trainer, const TrainingData& data, const fs::path& path) {
  std::vector<Tensor> rows;
  const std::size_t count = std::min<std::size_t>(4, data.reference.size());
  for (std::size_t i = 0; i < count; ++i) {
    const Tensor& photo = data.reference[i].photo;
    const Tensor sketch = trainer.infer_p2s(photo);
    rows.push_back(hconcat_images({photo, sketch, trainer.infer_s2p(sketch)}));
  }
  if (!rows.empty()) write_png(path, vconcat_images(rows));
}

int cmd_train(const TrainArgs& args) {
  const TrainConfig config = load_train_config(args.config);
  const FeatureExtractor extractor = toy_extractor(config.extractor_seed);
  const ReferencePatchStore store = ReferencePatchStore::load(args.ref, extractor.fingerprint());

  const DatasetLayout layout = DatasetLayout::open(args.data, /*require_sketches=*/true);
  TrainingData data;
  data.reference = layout.load_pairs("train");
  data.extra_photos = layout.load_unpaired_photos("train");
  if (!args.extra_photos.empty()) {
    for (auto& p : load_extra_photos(args.extra_photos)) data.extra_photos.push_back(std::move(p));
  }
  const std::size_t references = data.reference.size(), extras = data.extra_photos.size();

  Trainer trainer(config, extractor, store, std::move(data));
  if (args.dry_run) {
    std::cout << serialize_train_config(config);
    std::cout << "# reference pairs: " << references << ", extra photos: " << extras << "\n";
    std::cout << "# steps per epoch: " << trainer.steps_per_epoch() << ", total steps: " << trainer.total_steps()
              << "\n";
    return kExitOk;
  }

  fs::create_directories(args.out / "checkpoints");
  fs::create_directories(args.out / "samples");
  const fs::path latest = args.out / "checkpoints" / "latest.scgt";
  if (args.resume && fs::exists(latest)) {
    trainer.load(latest);
    std::cout << "resumed at step " << trainer.global_step() << "\n";
  }
  write_file_atomic(args.out / "config.txt", serialize_train_config(config));

  const fs::path log_path = args.out / "train_log.tsv";
  const bool fresh_log = trainer.global_step() == 0 || !fs::exists(log_path);
  std::ofstream log(log_path, fresh_log ? std::ios::trunc : std::ios::app);
  if (!log) throw IoError("cannot open " + log_path.string());
  if (fresh_log) log << log_header() << "\n";

  // Samples need the dataset again since the trainer owns its copy.
  TrainingData samples;
  samples.reference = layout.load_pairs("train");

  const std::size_t interval_steps = config.checkpoint_interval * trainer.steps_per_epoch();
  const std::size_t budget = args.max_steps == 0 ? trainer.total_steps() : args.max_steps;
  trainer.train(budget, [&](const LossReport& r) {
    log << log_line(r) << "\n";
    const std::size_t done = r.step + 1;
    if (done % interval_steps == 0 || done == trainer.total_steps()) {
      log.flush();
      char name[64];
      std::snprintf(name, sizeof name, "epoch_%03zu", done / trainer.steps_per_epoch());
      trainer.save(args.out / "checkpoints" / (std::string(name) + ".scgt"));
      trainer.save(latest);
      write_sample_grid(trainer, samples, args.out / "samples" / (std::string(name) + ".png"));
      std::cout << "step " << done << "/" << trainer.total_steps() << " L_p=" << r.psf << " L_sty=" << r.style
                << " L_cyc=" << r.cycle << " L_D=" << r.d << "\n";
    }
  });
  trainer.save(latest);
  std::cout << "finished at step " << trainer.global_step() << " of " << trainer.total_steps() << "\n";
  return kExitOk;
}

// -------------------------------------------------------------------- infer

struct InferArgs {
  fs::path ckpt, input, out, config;
  std::string direction = "p2s";
  bool no_pad = false;
};

Tensor prepare_input(Tensor image, std::size_t channels, const fs::path& source) {
  if (image.dim(0) == channels) return image;
  if (channels == 1 && image.dim(0) == 3) return to_grayscale(image);
  if (channels == 3 && image.dim(0) == 1) return concat({image, image, image}, 0).detach();
  throw DimensionError(source.string() + ": cannot use a " + std::to_string(image.dim(0)) + "-channel image");
}

int cmd_infer(const InferArgs& args) {
  if (args.direction != "p2s" && args.direction != "s2p") {
    throw ConfigError("direction must be p2s or s2p, got '" + args.direction + "'");
  }
  fs::path config_path = args.config;
  if (config_path.empty()) {
    // A checkpoint written by `train` sits two levels below config.txt.
    const fs::path guess = args.ckpt.parent_path().parent_path() / "config.txt";
    if (fs::exists(guess)) config_path = guess;
  }
  const TrainConfig config = config_path.empty() ? TrainConfig{} : load_train_config(config_path);

  const bool p2s = args.direction == "p2s";
  GeneratorSpec spec = config.generator;
  spec.in_channels = p2s ? 3 : 1;
  spec.out_channels = p2s ? 1 : 3;
  GeneratorNet net(spec, 0, p2s ? "g_p2s/" : "g_s2p/");
  assign_checkpoint(read_checkpoint(args.ckpt), net.parameters());

  std::vector<std::pair<fs::path, fs::path>> jobs;
  if (fs::is_directory(args.input)) {
    fs::create_directories(args.out);
    for (const fs::path& p : list_png_files(args.input)) jobs.emplace_back(p, args.out / p.filename());
    if (jobs.empty()) throw IoError("no PNG files in " + args.input.string());
  } else {
    if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
    jobs.emplace_back(args.input, args.out);
  }
  for (const auto& [in, out] : jobs) {
    const Tensor image = prepare_input(read_png(in), spec.in_channels, in);
    write_png(out, run_generator(net, image, !args.no_pad));
    std::cout << in.string() << " -> " << out.string() << "\n";
  }
  return kExitOk;
}

// --------------------------------------------------------------- stego-demo

struct StegoArgs {
  std::string sigmas = "0,10,20,30";
  std::string seeds = "1..5";
  fs::path out;
  std::size_t steps = 0;
  std::size_t triptych_items = 4;
};

int cmd_stego(const StegoArgs& args) {
  StegoConfig config;
  if (args.steps != 0) config.steps = args.steps;
  config.validate();
  const std::vector<double> sigmas = parse_double_list(args.sigmas);
  const std::vector<std::uint64_t> seeds = parse_seed_list(args.seeds);
  fs::create_directories(args.out / "triptychs");

  const auto reports = noise_sweep(config, sigmas, seeds, [&](const StegoRun& run, const StegoDataset& data) {
    const StegoReport& r = run.report;
    std::vector<Tensor> rows;
    for (std::size_t i = 0; i < std::min(args.triptych_items, data.held_out.size()); ++i) {
      rows.push_back(stego_triptych(run, data.held_out[i]));
    }
    char name[96];
    std::snprintf(name, sizeof name, "sigma%g_seed%llu.png", r.sigma_pixels, static_cast<unsigned long long>(r.seed));
    if (!rows.empty()) write_png(args.out / "triptychs" / name, vconcat_images(rows));
    std::printf("sigma=%g seed=%llu probe_err_generated=%.4f probe_err_true=%.4f cycle_err=%.4f%s (%.0fs)\n",
                r.sigma_pixels, static_cast<unsigned long long>(r.seed), r.probe_err_generated, r.probe_err_true,
                r.cycle_err, r.diverged ? " DIVERGED" : "", r.seconds);
    std::fflush(stdout);
  });
  write_stego_table(args.out / "stego.tsv", reports);
  write_stego_details(args.out / "details.tsv", reports);
  write_stego_plot(args.out / "plot.png", reports);
  std::cout << "wrote " << (args.out / "stego.tsv").string() << "\n";
  return kExitOk;
}

// ------------------------------------------------------------ gen-synthetic

struct SynthArgs {
  std::size_t count = 20;
  std::size_t size = 64;
  std::size_t hue_classes = 8;
  std::size_t test_count = 0;
  std::size_t photo_only = 0;
  std::uint64_t seed = 0;
  fs::path out;
};

int cmd_gen_synthetic(const SynthArgs& args) {
  if (args.count == 0) throw ConfigError("--count must be positive");
  if (args.test_count + args.photo_only > args.count) {
    throw ConfigError("--test-count plus --photo-only exceeds --count");
  }
  SyntheticDomainSpec spec;
  spec.image_size = args.size;
  spec.hue_classes = args.hue_classes;
  spec.seed = args.seed;
  const auto items = gen_synthetic_domains(spec, args.count);

  fs::create_directories(args.out / "photos");
  fs::create_directories(args.out / "sketches");
  std::string manifest, attributes = "stem\tattribute\n";
  // Layout: paired train items, then photo-only train items, then test pairs.
  const std::size_t paired_train = args.count - args.test_count - args.photo_only;
  for (std::size_t i = 0; i < items.size(); ++i) {
    char stem[32];
    std::snprintf(stem, sizeof stem, "item_%05zu", i);
    const bool test = i >= paired_train + args.photo_only;
    const bool photo_only = !test && i >= paired_train;
    write_png(args.out / "photos" / (std::string(stem) + ".png"), items[i].photo);
    if (!photo_only) write_png(args.out / "sketches" / (std::string(stem) + ".png"), items[i].sketch);
    manifest += std::string(stem) + "\t" + (test ? "test" : "train") + "\n";
    attributes += std::string(stem) + "\t" + std::to_string(items[i].attribute) + "\n";
  }
  write_file_atomic(args.out / "manifest.tsv", manifest);
  write_file_atomic(args.out / "attributes.tsv", attributes);
  std::cout << "wrote " << items.size() << " items (" << paired_train << " train pairs, " << args.photo_only
            << " photo-only, " << args.test_count << " test) to " << args.out.string() << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- match-viz

struct MatchVizArgs {
  fs::path ref, data, input, out;
  int level = 3;
  std::uint64_t seed = 0;
  std::size_t candidates = kDefaultCandidates;
};

int cmd_match_viz(const MatchVizArgs& args) {
  const FeatureExtractor extractor = toy_extractor(args.seed);
  const ReferencePatchStore store = ReferencePatchStore::load(args.ref, extractor.fingerprint());
  if (!store.has_level(args.level)) {
    throw ConfigError("store has no bank for level " + std::to_string(args.level));
  }
  const DatasetLayout layout = DatasetLayout::open(args.data, /*require_sketches=*/true);
  std::vector<Tensor> sketches;
  for (const ImagePair& p : layout.load_pairs("train")) sketches.push_back(p.sketch);
  if (sketches.size() != store.size()) {
    throw IncompatibleError("store holds " + std::to_string(store.size()) + " references but " +
                            args.data.string() + " has " + std::to_string(sketches.size()) + " train pairs");
  }

  Tensor image = read_png(args.input);
  if (image.dim(0) == 1) image = concat({image, image, image}, 0).detach();
  const FeaturePyramid pyramid = extract_pyramid(image, extractor, args.input.stem().string());
  const auto candidates = select_candidates(pyramid, store, std::min(args.candidates, store.size()));
  const MatchResult matches = match_conv(pyramid, store, args.level, candidates);
  const Tensor projection = pixel_projection(matches, store, sketches, level_downsample(extractor, args.level));
  // Projection is in [0, 1]; images are stored from [-1, 1].
  const Tensor shown = add_scalar(scale(projection, 2.0), -1.0).detach();
  if (args.out.has_parent_path()) fs::create_directories(args.out.parent_path());
  write_png(args.out, hconcat_images({image, shown}));

  double mean_score = 0.0;
  std::size_t used = 0;
  for (const PatchMatch& m : matches.matches) {
    if (m.zero_query) continue;
    mean_score += m.score;
    ++used;
  }
  std::cout << "level " << args.level << ": " << matches.count() << " patches, candidates";
  for (std::size_t c : candidates) std::cout << " " << c;
  std::cout << ", mean cosine " << (used ? mean_score / used : 0.0) << "\n";
  return kExitOk;
}

// ---------------------------------------------------------------- gradcheck

int cmd_gradcheck(double tolerance, std::uint64_t seed) {
  const auto results = run_gradient_suite(tolerance, seed);
  std::size_t failed = 0;
  for (const auto& r : results) {
    std::printf("%-4s %-40s max_rel_err=%.3e checked=%zu\n", r.passed ? "ok" : "FAIL", r.name.c_str(),
                r.max_rel_error, r.checked);
    if (!r.passed) ++failed;
  }
  std::printf("%zu/%zu checks passed (tolerance %.1e)\n", results.size() - failed, results.size(), tolerance);
  return failed == 0 ? kExitOk : kExitRuntime;
}

// --------------------------------------------------------------------- ssim

int cmd_ssim(const fs::path& a, const fs::path& b, const std::string& window) {
  SsimParams params;
  if (window == "gaussian11") {
    params.window = SsimWindow::Gaussian11;
  } else if (window == "uniform8") {
    params.window = SsimWindow::Uniform8;
  } else {
    throw ConfigError("window must be gaussian11 or uniform8, got '" + window + "'");
  }
  const Tensor x = read_png(a), y = read_png(b);
  if (x.shape() != y.shape()) {
    throw DimensionError("images differ in shape: " + shape_str(x.shape()) + " vs " + shape_str(y.shape()));
  }
  std::printf("%.10f\n", ssim(x, y, params));
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Face photo/sketch translation toolkit"};
  app.require_subcommand(1);
  app.set_help_all_flag("--help-all", "Show help for every subcommand");

  BuildRefArgs build_ref;
  auto* c_build = app.add_subcommand("build-ref", "Build the reference patch store from a dataset directory");
  c_build->add_option("--data", build_ref.data, "Dataset root with photos/ and sketches/")->required();
  c_build->add_option("--k", build_ref.k, "Patch size")->capture_default_str();
  c_build->add_option("--out", build_ref.out, "Output store file")->required();
  c_build->add_option("--seed", build_ref.seed, "Feature extractor seed")->capture_default_str();
  c_build->add_option("--levels", build_ref.levels,
                      "Comma-separated bank levels (default: every level whose map fits k)");

  TrainArgs train;
  auto* c_train = app.add_subcommand("train", "Train the photo/sketch generators");
  c_train->add_option("--config", train.config, "Config file (key = value)")->required();
  c_train->add_option("--data", train.data, "Dataset root with reference pairs")->required();
  c_train->add_option("--extra-photos", train.extra_photos, "Directory of additional unpaired photos");
  c_train->add_option("--ref", train.ref, "Reference store built by build-ref")->required();
  c_train->add_option("--out", train.out, "Output directory")->required();
  c_train->add_flag("--dry-run", train.dry_run, "Print the resolved config and step count, then exit");
  c_train->add_flag("--resume", train.resume, "Continue from <out>/checkpoints/latest.scgt if present");
  c_train->add_option("--max-steps", train.max_steps, "Stop after this many steps (0 = full schedule)");

  InferArgs infer;
  auto* c_infer = app.add_subcommand("infer", "Translate an image or a directory of images");
  c_infer->add_option("--ckpt", infer.ckpt, "Trainer checkpoint")->required();
  c_infer->add_option("--input", infer.input, "Input PNG or directory")->required();
  c_infer->add_option("--direction", infer.direction, "p2s or s2p")->capture_default_str();
  c_infer->add_option("--out", infer.out, "Output PNG, or directory for directory input")->required();
  c_infer->add_option("--config", infer.config, "Config used for training (default: config.txt of the run)");
  c_infer->add_flag("--no-pad", infer.no_pad, "Reject sizes not divisible by the generator stride");

  StegoArgs stego;
  auto* c_stego = app.add_subcommand("stego-demo", "Noise-injection sweep of the hidden-attribute probe");
  c_stego->add_option("--sigmas", stego.sigmas, "Comma-separated noise levels in 8-bit pixel units")
      ->capture_default_str();
  c_stego->add_option("--seeds", stego.seeds, "Seed list, 'a..b' or comma-separated")->capture_default_str();
  c_stego->add_option("--out", stego.out, "Output directory")->required();
  c_stego->add_option("--steps", stego.steps, "Training steps per run (0 = library default)");
  c_stego->add_option("--triptychs", stego.triptych_items, "Held-out items per triptych image")
      ->capture_default_str();

  SynthArgs synth;
  auto* c_synth = app.add_subcommand("gen-synthetic", "Write a synthetic photo/sketch dataset");
  c_synth->add_option("--count", synth.count, "Number of items")->capture_default_str();
  c_synth->add_option("--size", synth.size, "Image side in pixels")->capture_default_str();
  c_synth->add_option("--hue-classes", synth.hue_classes, "Number of hue classes")->capture_default_str();
  c_synth->add_option("--test-count", synth.test_count, "Trailing items assigned to the test split")
      ->capture_default_str();
  c_synth->add_option("--photo-only", synth.photo_only, "Train items written without a sketch")
      ->capture_default_str();
  c_synth->add_option("--seed", synth.seed, "Generator seed")->capture_default_str();
  c_synth->add_option("--out", synth.out, "Output dataset root")->required();

  MatchVizArgs viz;
  auto* c_viz = app.add_subcommand("match-viz", "Show the pixel projection of an image's patch matches");
  c_viz->add_option("--ref", viz.ref, "Reference store")->required();
  c_viz->add_option("--data", viz.data, "Dataset the store was built from")->required();
  c_viz->add_option("--input", viz.input, "Query photo")->required();
  c_viz->add_option("--out", viz.out, "Output PNG")->required();
  c_viz->add_option("--level", viz.level, "Pyramid level")->capture_default_str();
  c_viz->add_option("--seed", viz.seed, "Feature extractor seed")->capture_default_str();
  c_viz->add_option("--candidates", viz.candidates, "Coarse candidates")->capture_default_str();

  double grad_tol = 1e-4;
  std::uint64_t grad_seed = 0;
  auto* c_grad = app.add_subcommand("gradcheck", "Finite-difference check of every differentiable loss and network");
  c_grad->add_option("--tolerance", grad_tol, "Maximum relative error")->capture_default_str();
  c_grad->add_option("--seed", grad_seed, "Seed of the random test inputs")->capture_default_str();

  std::string profile = "default";
  auto* c_print = app.add_subcommand("print-config", "Print a complete training config");
  c_print->add_option("--profile", profile, "default or smoke")->capture_default_str();

  fs::path ssim_a, ssim_b;
  std::string ssim_window = "gaussian11";
  auto* c_ssim = app.add_subcommand("ssim", "Mean SSIM of two PNG images");
  c_ssim->add_option("--a", ssim_a, "First image")->required();
  c_ssim->add_option("--b", ssim_b, "Second image")->required();
  c_ssim->add_option("--window", ssim_window, "gaussian11 or uniform8")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitInput;
  }

  try {
    if (c_build->parsed()) return cmd_build_ref(build_ref);
    if (c_train->parsed()) return cmd_train(train);
    if (c_infer->parsed()) return cmd_infer(infer);
    if (c_stego->parsed()) return cmd_stego(stego);
    if (c_synth->parsed()) return cmd_gen_synthetic(synth);
    if (c_viz->parsed()) return cmd_match_viz(viz);
    if (c_grad->parsed()) return cmd_gradcheck(grad_tol, grad_seed);
    if (c_ssim->parsed()) return cmd_ssim(ssim_a, ssim_b, ssim_window);
    if (c_print->parsed()) {
      if (profile != "default" && profile != "smoke") throw ConfigError("unknown profile '" + profile + "'");
      std::cout << serialize_train_config(profile == "smoke" ? smoke_train_config() : TrainConfig{});
      return kExitOk;
    }
  } catch (const IncompatibleError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitIncompatible;
  } catch (const ConfigError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DatasetError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const DimensionError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const IoError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitRuntime;
  }
  return kExitRuntime;
}
