#include "scg/ssim.hpp"

#include <cmath>

#include "scg/error.hpp"

namespace scg {

std::size_t ssim_window_size(SsimWindow window) { return window == SsimWindow::Uniform8 ? 8 : 11; }

namespace {

// Normalized 1-D profile; the 2-D window is its outer product.
std::vector<double> window_profile(const SsimParams& params) {
  const std::size_t n = ssim_window_size(params.window);
  std::vector<double> g(n, 1.0);
  if (params.window == SsimWindow::Gaussian11) {
    const double c = (static_cast<double>(n) - 1.0) / 2.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double d = static_cast<double>(i) - c;
      g[i] = std::exp(-d * d / (2.0 * params.gaussian_sigma * params.gaussian_sigma));
    }
  }
  double total = 0.0;
  for (double v : g) total += v;
  for (double& v : g) v /= total;
  return g;
}

// Separable valid-mode filtering of one plane.
std::vector<double> filter_valid(const std::vector<double>& in, std::size_t h, std::size_t w,
                                 const std::vector<double>& g) {
  const std::size_t n = g.size(), oh = h - n + 1, ow = w - n + 1;
  std::vector<double> rows(h * ow);
  for (std::size_t y = 0; y < h; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += g[i] * in[y * w + x + i];
      rows[y * ow + x] = acc;
    }
  std::vector<double> out(oh * ow);
  for (std::size_t y = 0; y < oh; ++y)
    for (std::size_t x = 0; x < ow; ++x) {
      double acc = 0.0;
      for (std::size_t i = 0; i < n; ++i) acc += g[i] * rows[(y + i) * ow + x];
      out[y * ow + x] = acc;
    }
  return out;
}

}  // namespace

std::vector<double> ssim_window(const SsimParams& params) {
  const auto g = window_profile(params);
  const std::size_t n = g.size();
  std::vector<double> w(n * n);
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) w[y * n + x] = g[y] * g[x];
  return w;
}

double ssim(const Tensor& a, const Tensor& b, const SsimParams& params) {
  if (a.shape() != b.shape()) {
    throw DimensionError("ssim inputs differ in shape: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  }
  if (a.rank() != 2 && a.rank() != 3) throw DimensionError("ssim expects [C,H,W] or [H,W]");
  const std::size_t channels = a.rank() == 3 ? a.dim(0) : 1;
  const std::size_t h = a.dim(a.rank() - 2), w = a.dim(a.rank() - 1);
  const std::size_t n = ssim_window_size(params.window);
  if (h < n || w < n) {
    throw DimensionError("ssim window " + std::to_string(n) + " exceeds image " + std::to_string(h) + "x" +
                         std::to_string(w));
  }
  if (!(params.dynamic_range > 0.0)) throw ConfigError("ssim dynamic range must be positive");

  const auto g = window_profile(params);
  const double c1 = std::pow(params.k1 * params.dynamic_range, 2);
  const double c2 = std::pow(params.k2 * params.dynamic_range, 2);
  const std::size_t plane = h * w;
  double total = 0.0;
  std::size_t windows = 0;
  for (std::size_t ch = 0; ch < channels; ++ch) {
    std::vector<double> x(a.data().begin() + ch * plane, a.data().begin() + (ch + 1) * plane);
    std::vector<double> y(b.data().begin() + ch * plane, b.data().begin() + (ch + 1) * plane);
    std::vector<double> xx(plane), yy(plane), xy(plane);
    for (std::size_t i = 0; i < plane; ++i) {
      xx[i] = x[i] * x[i];
      yy[i] = y[i] * y[i];
      xy[i] = x[i] * y[i];
    }
    const auto mx = filter_valid(x, h, w, g), my = filter_valid(y, h, w, g);
    const auto sxx = filter_valid(xx, h, w, g), syy = filter_valid(yy, h, w, g);
    const auto sxy = filter_valid(xy, h, w, g);
    for (std::size_t i = 0; i < mx.size(); ++i) {
      const double vx = sxx[i] - mx[i] * mx[i];
      const double vy = syy[i] - my[i] * my[i];
      const double cov = sxy[i] - mx[i] * my[i];
      total += ((2 * mx[i] * my[i] + c1) * (2 * cov + c2)) /
               ((mx[i] * mx[i] + my[i] * my[i] + c1) * (vx + vy + c2));
    }
    windows += mx.size();
  }
  return total / static_cast<double>(windows);
}

}  // namespace scg
