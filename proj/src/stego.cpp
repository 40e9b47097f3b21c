#include "scg/stego.hpp"

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <fstream>
#include <map>
#include <numbers>

#include "scg/adam.hpp"
#include "scg/error.hpp"
#include "scg/image_io.hpp"
#include "scg/rng.hpp"

namespace scg {

void StegoConfig::validate() const {
  auto fail = [](const std::string& m) { throw ConfigError(m); };
  if (image_size < 8 || image_size % (std::size_t{1} << generator.downsample_stages) != 0) {
    fail("stego image_size must be at least 8 and divisible by the generator stride");
  }
  if (image_size < (std::size_t{1} << discriminator.layers)) fail("stego image_size is below the discriminator stride");
  if (hue_classes < 2) fail("stego needs at least two hue classes");
  if (train_count == 0 || held_out_count == 0) fail("stego train and held-out sets must be nonempty");
  if (batch_size == 0 || probe_batch == 0 || probe_width == 0) fail("stego batch sizes must be positive");
  if (!(lr_g > 0) || !(lr_d > 0) || !(probe_lr > 0)) fail("stego learning rates must be positive");
  if (!(lambda_cyc >= 0) || !(lambda_adv >= 0)) fail("stego loss weights must be non-negative");
}

StegoDataset make_stego_dataset(const StegoConfig& config, std::uint64_t seed) {
  config.validate();
  SyntheticDomainSpec spec;
  spec.image_size = config.image_size;
  spec.hue_classes = config.hue_classes;
  spec.seed = derive_seed(seed, {0x64617461});
  StegoDataset d;
  d.train = gen_synthetic_domains(spec, config.train_count, 0);
  d.held_out = gen_synthetic_domains(spec, config.held_out_count, config.train_count);
  return d;
}

namespace {

Tensor stack_field(const std::vector<SyntheticItem>& items, const std::vector<std::size_t>& idx,
                   Tensor SyntheticItem::*field) {
  const Tensor& first = items[idx.front()].*field;
  std::vector<double> data;
  data.reserve(idx.size() * first.numel());
  for (std::size_t i : idx) {
    const Tensor& t = items[i].*field;
    data.insert(data.end(), t.data().begin(), t.data().end());
  }
  return Tensor::from_data({idx.size(), first.dim(0), first.dim(1), first.dim(2)}, std::move(data));
}

std::vector<std::size_t> iota_indices(std::size_t n) {
  std::vector<std::size_t> v(n);
  for (std::size_t i = 0; i < n; ++i) v[i] = i;
  return v;
}

std::vector<NamedTensor> joined(const std::vector<NamedTensor>& a, const std::vector<NamedTensor>& b) {
  std::vector<NamedTensor> out = a;
  out.insert(out.end(), b.begin(), b.end());
  return out;
}

void fill_missing_grads(const std::vector<NamedTensor>& params) {
  for (const auto& p : params)
    if (!p.tensor.has_grad()) Tensor(p.tensor).mutable_grad();
}

// Runs `g` over a large batch in chunks without keeping the tape.
Tensor apply_chunked(const GeneratorNet& g, const Tensor& x, std::size_t chunk = 32) {
  std::vector<Tensor> parts;
  for (std::size_t b = 0; b < x.dim(0); b += chunk) {
    parts.push_back(g(slice(x, 0, b, std::min(x.dim(0), b + chunk))).detach());
  }
  return concat(parts, 0).detach();
}

class ProbeNet {
 public:
  ProbeNet(std::size_t width, std::size_t classes, std::uint64_t seed) : rng_(seed) {
    w1_ = conv(width, 1, 3);
    b1_ = bias(width);
    w2_ = conv(2 * width, width, 3);
    b2_ = bias(2 * width);
    w3_ = conv(2 * width, 2 * width, 3);
    b3_ = bias(2 * width);
    head_ = conv(classes, 2 * width, 1);
    bias_ = bias(classes);
  }

  Tensor logits(const Tensor& x) const {
    Tensor h = leaky_relu(add_bias(conv2d(x, w1_, 1, 1), b1_), kLeakySlope);
    h = leaky_relu(add_bias(conv2d(h, w2_, 2, 1), b2_), kLeakySlope);
    h = leaky_relu(add_bias(conv2d(h, w3_, 2, 1), b3_), kLeakySlope);
    h = avg_pool2d(h, h.dim(2), h.dim(2));
    h = add_bias(conv2d(h, head_, 1, 0), bias_);
    return reshape(h, {h.dim(0), h.dim(1)});
  }

  const std::vector<NamedTensor>& parameters() const { return params_; }

 private:
  Tensor conv(std::size_t o, std::size_t i, std::size_t k) {
    // He-style scale so the probe trains quickly from scratch.
    const double stddev = std::sqrt(2.0 / static_cast<double>(i * k * k));
    Tensor t = randn({o, i, k, k}, rng_, stddev, true);
    params_.push_back({"probe/w" + std::to_string(params_.size()), t});
    return t;
  }
  Tensor bias(std::size_t n) {
    Tensor t = Tensor::zeros({n}, true);
    params_.push_back({"probe/b" + std::to_string(params_.size()), t});
    return t;
  }

  Rng rng_;
  Tensor w1_, b1_, w2_, b2_, w3_, b3_, head_, bias_;
  std::vector<NamedTensor> params_;
};

}  // namespace

double probe_accuracy(const Tensor& train_inputs, const std::vector<std::size_t>& train_labels,
                      const Tensor& test_inputs, const std::vector<std::size_t>& test_labels,
                      const StegoConfig& config, std::uint64_t seed) {
  if (train_inputs.rank() != 4 || train_inputs.dim(1) != 1 || train_inputs.dim(0) != train_labels.size() ||
      test_inputs.rank() != 4 || test_inputs.dim(0) != test_labels.size()) {
    throw DimensionError("probe inputs must be [N,1,S,S] with one label per item");
  }
  if (train_labels.empty() || test_labels.empty()) throw ContractError("probe needs train and test items");
  ProbeNet probe(config.probe_width, config.hue_classes, derive_seed(seed, {0x70726f62}));
  Adam opt(probe.parameters(), AdamOptions{config.probe_lr, 0.9, 0.999});
  Rng rng(derive_seed(seed, {0x62617463}));
  std::uniform_int_distribution<std::size_t> pick(0, train_labels.size() - 1);
  const std::size_t S = train_inputs.dim(2), plane = S * S;
  for (std::size_t step = 0; step < config.probe_steps; ++step) {
    std::vector<double> data(config.probe_batch * plane);
    std::vector<std::size_t> labels(config.probe_batch);
    for (std::size_t b = 0; b < config.probe_batch; ++b) {
      const std::size_t i = pick(rng);
      std::copy_n(train_inputs.data().begin() + i * plane, plane, data.begin() + b * plane);
      labels[b] = train_labels[i];
    }
    opt.zero_grad();
    const Tensor loss = cross_entropy(probe.logits(Tensor::from_data({config.probe_batch, 1, S, S}, data)), labels);
    backward(loss);
    fill_missing_grads(opt.params());
    opt.step();
  }
  std::size_t correct = 0;
  for (std::size_t b = 0; b < test_labels.size(); b += 64) {
    const std::size_t e = std::min(test_labels.size(), b + 64);
    const Tensor lg = probe.logits(slice(test_inputs, 0, b, e));
    const std::size_t K = lg.dim(1);
    for (std::size_t i = 0; i < e - b; ++i) {
      auto row = lg.data().subspan(i * K, K);
      const std::size_t best = static_cast<std::size_t>(std::max_element(row.begin(), row.end()) - row.begin());
      correct += best == test_labels[b + i];
    }
  }
  return static_cast<double>(correct) / static_cast<double>(test_labels.size());
}

std::size_t read_hue(const Tensor& photo, const Geometry& geometry, std::size_t hue_classes) {
  const std::size_t S = photo.dim(1);
  const auto labels = label_map(geometry, S);
  std::array<double, 3> mean{0, 0, 0};
  std::size_t n = 0;
  for (std::size_t i = 0; i < S * S; ++i) {
    if (labels[i] == 0) continue;
    for (std::size_t c = 0; c < 3; ++c) mean[c] += (photo.data()[c * S * S + i] + 1.0) / 2.0;
    ++n;
  }
  if (n == 0) return 0;
  // Hue angle of the mean colour against each class hue.
  auto angle = [](const std::array<double, 3>& rgb) {
    return std::atan2(std::sqrt(3.0) * (rgb[1] - rgb[2]), 2.0 * rgb[0] - rgb[1] - rgb[2]);
  };
  const double a = angle(mean);
  std::size_t best = 0;
  double best_d = 1e9;
  for (std::size_t k = 0; k < hue_classes; ++k) {
    double d = std::fabs(a - angle(hue_color(k, hue_classes)));
    d = std::min(d, 2.0 * std::numbers::pi - d);
    if (d < best_d) {
      best_d = d;
      best = k;
    }
  }
  return best;
}

double chance_accuracy_bound(std::size_t classes, std::size_t samples) {
  const double p = 1.0 / static_cast<double>(classes);
  return p + 3.0 * std::sqrt(p * (1.0 - p) / static_cast<double>(samples));
}

StegoRun run_plain_cycle(const StegoDataset& data, const StegoConfig& config, double sigma_pixels,
                         std::uint64_t seed) {
  config.validate();
  if (!(sigma_pixels >= 0.0)) throw ConfigError("noise sigma must be non-negative");
  const auto t0 = std::chrono::steady_clock::now();
  GeneratorSpec p2s_spec = config.generator, s2p_spec = config.generator;
  p2s_spec.in_channels = 3;
  p2s_spec.out_channels = 1;
  s2p_spec.in_channels = 1;
  s2p_spec.out_channels = 3;
  DiscriminatorSpec ds_spec = config.discriminator, dp_spec = config.discriminator;
  ds_spec.in_channels = 1;
  dp_spec.in_channels = 3;
  StegoRun run{StegoReport{}, GeneratorNet(p2s_spec, derive_seed(seed, {1}), "g_p2s/"),
               GeneratorNet(s2p_spec, derive_seed(seed, {2}), "g_s2p/")};
  const DiscriminatorNet d_s(ds_spec, derive_seed(seed, {3}), "d_s/");
  const DiscriminatorNet d_p(dp_spec, derive_seed(seed, {4}), "d_p/");
  const GeneratorNet& g_p2s = run.g_p2s;
  const GeneratorNet& g_s2p = run.g_s2p;
  Adam opt_g(joined(g_p2s.parameters(), g_s2p.parameters()),
             AdamOptions{config.lr_g, config.beta1, config.beta2});
  Adam opt_d(joined(d_s.parameters(), d_p.parameters()), AdamOptions{config.lr_d, config.beta1, config.beta2});

  StegoReport& rep = run.report;
  rep.sigma_pixels = sigma_pixels;
  rep.seed = seed;
  const double sigma = sigma_pixels * 2.0 / 255.0;
  const std::size_t N = data.train.size();

  for (std::size_t step = 0; step < config.steps && !rep.diverged; ++step) {
    Rng rng(derive_seed(seed, {0x73746570, step}));
    std::uniform_int_distribution<std::size_t> pick(0, N - 1);
    std::vector<std::size_t> pi(config.batch_size), si(config.batch_size);
    for (auto& i : pi) i = pick(rng);
    for (auto& i : si) i = pick(rng);  // drawn independently: the domains stay unpaired
    const Tensor p = stack_field(data.train, pi, &SyntheticItem::photo);
    const Tensor s = stack_field(data.train, si, &SyntheticItem::sketch);

    const Tensor fake_s = g_p2s(p);
    const Tensor recon_p = g_s2p(inject_noise(fake_s, sigma, rng));
    const Tensor fake_p = g_s2p(s);
    const Tensor recon_s = g_p2s(fake_p);

    opt_d.zero_grad();
    const Tensor ld =
        add(hinge_d_loss(d_s(s), d_s(fake_s.detach())), hinge_d_loss(d_p(p), d_p(fake_p.detach())));
    if (!std::isfinite(ld.item())) {
      rep.diverged = true;
      break;
    }
    backward(ld);
    fill_missing_grads(opt_d.params());
    opt_d.step();

    opt_g.zero_grad();
    const Tensor cyc = add(reconstruction_distance(recon_p, p, config.cycle),
                           reconstruction_distance(recon_s, s, config.cycle));
    const Tensor adv = add(hinge_g_loss(d_s(fake_s)), hinge_g_loss(d_p(fake_p)));
    const Tensor lg = add(scale(cyc, config.lambda_cyc), scale(adv, config.lambda_adv));
    if (!std::isfinite(lg.item())) {
      rep.diverged = true;
      break;
    }
    rep.final_d_loss = ld.item();
    rep.final_cycle_loss = cyc.item();
    backward(lg);
    fill_missing_grads(opt_g.params());
    opt_g.step();
    rep.steps = step + 1;
  }

  if (!rep.diverged) {
    const auto all_train = iota_indices(data.train.size()), all_test = iota_indices(data.held_out.size());
    std::vector<std::size_t> train_labels, test_labels;
    for (const auto& it : data.train) train_labels.push_back(it.attribute);
    for (const auto& it : data.held_out) test_labels.push_back(it.attribute);
    const Tensor train_p = stack_field(data.train, all_train, &SyntheticItem::photo);
    const Tensor test_p = stack_field(data.held_out, all_test, &SyntheticItem::photo);
    const Tensor train_s = apply_chunked(g_p2s, train_p);
    const Tensor test_s = apply_chunked(g_p2s, test_p);
    Rng noise_rng(derive_seed(seed, {0x70726e7a}));
    const Tensor train_noisy = inject_noise(train_s, sigma, noise_rng).detach();
    const Tensor test_noisy = inject_noise(test_s, sigma, noise_rng).detach();
    const Tensor true_train = stack_field(data.train, all_train, &SyntheticItem::sketch);
    const Tensor true_test = stack_field(data.held_out, all_test, &SyntheticItem::sketch);

    const std::uint64_t probe_seed = derive_seed(seed, {0x70});
    rep.probe_err_generated = 1.0 - probe_accuracy(train_noisy, train_labels, test_noisy, test_labels, config, probe_seed);
    rep.probe_err_clean = sigma == 0.0 ? rep.probe_err_generated
                                       : 1.0 - probe_accuracy(train_s, train_labels, test_s, test_labels, config,
                                                              probe_seed);
    rep.probe_err_true = 1.0 - probe_accuracy(true_train, train_labels, true_test, test_labels, config, probe_seed);

    const Tensor recon = apply_chunked(g_s2p, test_s);
    double abs_err = 0.0;
    for (std::size_t i = 0; i < recon.numel(); ++i) abs_err += std::fabs(recon.data()[i] - test_p.data()[i]);
    rep.cycle_err = abs_err / static_cast<double>(recon.numel());
    std::size_t wrong = 0;
    const std::size_t S = config.image_size;
    for (std::size_t i = 0; i < data.held_out.size(); ++i) {
      const Tensor one = reshape(slice(recon, 0, i, i + 1), {3, S, S});
      wrong += read_hue(one, data.held_out[i].geometry, config.hue_classes) != data.held_out[i].attribute;
    }
    rep.recovery_err = static_cast<double>(wrong) / static_cast<double>(data.held_out.size());
    rep.held_out = data.held_out.size();
  }
  rep.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  return run;
}

std::vector<StegoReport> noise_sweep(
    const StegoConfig& config, const std::vector<double>& sigmas, const std::vector<std::uint64_t>& seeds,
    const std::function<void(const StegoRun&, const StegoDataset&)>& on_run) {
  if (sigmas.empty()) throw ConfigError("noise sweep needs at least one sigma");
  if (seeds.empty()) throw ConfigError("noise sweep needs at least one seed");
  std::vector<StegoReport> out;
  auto record = [&](const StegoRun& run, const StegoDataset& data) {
    out.push_back(run.report);
    if (on_run) on_run(run, data);
  };
  for (std::uint64_t seed : seeds) {
    const StegoDataset data = make_stego_dataset(config, seed);
    for (double sigma : sigmas) {
      const StegoRun run = run_plain_cycle(data, config, sigma, seed);
      record(run, data);
      if (run.report.diverged) {
        const std::uint64_t retry = seed + 1000;
        const StegoDataset retry_data = make_stego_dataset(config, retry);
        record(run_plain_cycle(retry_data, config, sigma, retry), retry_data);
      }
    }
  }
  return out;
}

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.precision(9);
  return out;
}

}  // namespace

void write_stego_table(const std::filesystem::path& path, const std::vector<StegoReport>& reports) {
  auto out = open_out(path);
  out << "sigma\tseed\tprobe_err_generated\tprobe_err_true\tcycle_err\tdiverged\n";
  for (const auto& r : reports) {
    out << r.sigma_pixels << '\t' << r.seed << '\t' << r.probe_err_generated << '\t' << r.probe_err_true << '\t'
        << r.cycle_err << '\t' << (r.diverged ? 1 : 0) << '\n';
  }
}

void write_stego_details(const std::filesystem::path& path, const std::vector<StegoReport>& reports) {
  auto out = open_out(path);
  out << "sigma\tseed\tprobe_err_generated\tprobe_err_true\tcycle_err\tdiverged\tprobe_err_clean\trecovery_err"
         "\tfinal_cycle_loss\tfinal_d_loss\tsteps\theld_out\tseconds\n";
  for (const auto& r : reports) {
    out << r.sigma_pixels << '\t' << r.seed << '\t' << r.probe_err_generated << '\t' << r.probe_err_true << '\t'
        << r.cycle_err << '\t' << (r.diverged ? 1 : 0) << '\t' << r.probe_err_clean << '\t' << r.recovery_err << '\t'
        << r.final_cycle_loss << '\t' << r.final_d_loss << '\t' << r.steps << '\t' << r.held_out << '\t'
        << r.seconds << '\n';
  }
}

namespace {

// 3x5 bitmaps for the characters used on the axes.
const std::map<char, std::array<const char*, 5>>& glyphs() {
  static const std::map<char, std::array<const char*, 5>> g{
      {'0', {"###", "#.#", "#.#", "#.#", "###"}}, {'1', {".#.", "##.", ".#.", ".#.", "###"}},
      {'2', {"###", "..#", "###", "#..", "###"}}, {'3', {"###", "..#", "###", "..#", "###"}},
      {'4', {"#.#", "#.#", "###", "..#", "..#"}}, {'5', {"###", "#..", "###", "..#", "###"}},
      {'6', {"###", "#..", "###", "#.#", "###"}}, {'7', {"###", "..#", "..#", "..#", "..#"}},
      {'8', {"###", "#.#", "###", "#.#", "###"}}, {'9', {"###", "#.#", "###", "..#", "###"}},
      {'.', {"...", "...", "...", "...", ".#."}}};
  return g;
}

struct Canvas {
  std::size_t w, h;
  std::vector<std::uint8_t> px;
  Canvas(std::size_t width, std::size_t height) : w(width), h(height), px(width * height * 3, 255) {}

  void dot(long x, long y, std::array<std::uint8_t, 3> c) {
    if (x < 0 || y < 0 || x >= static_cast<long>(w) || y >= static_cast<long>(h)) return;
    for (int k = 0; k < 3; ++k) px[(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * 3 + k] = c[k];
  }
  void line(long x0, long y0, long x1, long y1, std::array<std::uint8_t, 3> c, bool dashed = false) {
    const long dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const long sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    long err = dx + dy, n = 0;
    while (true) {
      if (!dashed || (n++ / 4) % 2 == 0) {
        dot(x0, y0, c);
        dot(x0, y0 + 1, c);
      }
      if (x0 == x1 && y0 == y1) break;
      const long e2 = 2 * err;
      if (e2 >= dy) {
        err += dy;
        x0 += sx;
      }
      if (e2 <= dx) {
        err += dx;
        y0 += sy;
      }
    }
  }
  void text(long x, long y, const std::string& s, int scale = 2) {
    for (char ch : s) {
      auto it = glyphs().find(ch);
      if (it != glyphs().end())
        for (int r = 0; r < 5; ++r)
          for (int col = 0; col < 3; ++col)
            if (it->second[r][col] == '#')
              for (int a = 0; a < scale; ++a)
                for (int b = 0; b < scale; ++b) dot(x + col * scale + a, y + r * scale + b, {0, 0, 0});
      x += 4 * scale;
    }
  }
};

std::string short_number(double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%g", v);
  return buf;
}

}  // namespace

void write_stego_plot(const std::filesystem::path& path, const std::vector<StegoReport>& reports) {
  std::map<double, std::array<double, 4>> sums;  // gen, true, cycle, count
  for (const auto& r : reports) {
    if (r.diverged) continue;
    auto& s = sums[r.sigma_pixels];
    s[0] += r.probe_err_generated;
    s[1] += r.probe_err_true;
    s[2] += r.cycle_err;
    s[3] += 1;
  }
  if (sums.empty()) throw ContractError("no completed runs to plot");
  const long W = 480, H = 320, left = 60, right = 20, top = 20, bottom = 50;
  Canvas cv(W, H);
  const double max_sigma = std::max(1.0, sums.rbegin()->first);
  auto X = [&](double s) { return left + static_cast<long>((W - left - right) * (s / max_sigma)); };
  auto Y = [&](double v) { return H - bottom - static_cast<long>((H - top - bottom) * std::clamp(v, 0.0, 1.0)); };
  cv.line(left, Y(0), W - right, Y(0), {0, 0, 0});
  cv.line(left, Y(0), left, Y(1), {0, 0, 0});
  for (double v : {0.0, 0.25, 0.5, 0.75, 1.0}) {
    cv.line(left - 5, Y(v), left, Y(v), {0, 0, 0});
    cv.line(left, Y(v), W - right, Y(v), {225, 225, 225});
    cv.text(8, Y(v) - 5, short_number(v));
  }
  for (const auto& [s, _] : sums) {
    cv.line(X(s), Y(0), X(s), Y(0) + 5, {0, 0, 0});
    cv.text(X(s) - 6, Y(0) + 12, short_number(s));
  }
  const std::array<std::array<std::uint8_t, 3>, 3> colours{{{220, 40, 40}, {40, 90, 220}, {30, 150, 60}}};
  for (int series = 0; series < 3; ++series) {
    long px = -1, py = -1;
    for (const auto& [s, v] : sums) {
      const long x = X(s), y = Y(v[series] / v[3]);
      for (long a = -3; a <= 3; ++a)
        for (long b = -3; b <= 3; ++b) cv.dot(x + a, y + b, colours[series]);
      if (px >= 0) cv.line(px, py, x, y, colours[series]);
      px = x;
      py = y;
    }
  }
  // Chance-level probe error for 8 classes.
  cv.line(left, Y(0.875), W - right, Y(0.875), {120, 120, 120}, true);
  write_png_raster(path, Raster{static_cast<std::size_t>(W), static_cast<std::size_t>(H), 3, std::move(cv.px)});
}

Tensor stego_triptych(const StegoRun& run, const SyntheticItem& item) {
  const std::size_t S = item.photo.dim(1);
  const Tensor p = reshape(item.photo, {1, 3, S, S});
  const Tensor s = run.g_p2s(p).detach();
  const Tensor back = run.g_s2p(s).detach();
  return hconcat_images({item.photo, reshape(s, {1, S, S}), reshape(back, {3, S, S})});
}

}  // namespace scg
