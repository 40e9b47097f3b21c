#pragma once

#include <cmath>
#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "scg/rng.hpp"
#include "scg/ssim.hpp"
#include "scg/tensor.hpp"

namespace scg::testing {

inline Tensor seeded_randn(Shape shape, std::uint64_t seed, double stddev = 1.0,
                           bool requires_grad = false) {
  Rng rng(seed);
  return randn(std::move(shape), rng, stddev, requires_grad);
}

inline double max_abs_diff(std::span<const double> a, std::span<const double> b) {
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::fabs(a[i] - b[i]));
  return m;
}

// Six nested loops over (b, o, y, x) and (c, ky, kx), zero padding.
inline std::vector<double> naive_conv(const Tensor& in, const Tensor& k, std::size_t stride,
                                      std::size_t pad) {
  const std::size_t B = in.dim(0), C = in.dim(1), H = in.dim(2), W = in.dim(3);
  const std::size_t O = k.dim(0), K = k.dim(2);
  const std::size_t Ho = (H + 2 * pad - K) / stride + 1, Wo = (W + 2 * pad - K) / stride + 1;
  std::vector<double> out(B * O * Ho * Wo, 0.0);
  for (std::size_t b = 0; b < B; ++b)
    for (std::size_t o = 0; o < O; ++o)
      for (std::size_t y = 0; y < Ho; ++y)
        for (std::size_t x = 0; x < Wo; ++x) {
          double acc = 0.0;
          for (std::size_t c = 0; c < C; ++c)
            for (std::size_t ky = 0; ky < K; ++ky)
              for (std::size_t kx = 0; kx < K; ++kx) {
                const long iy = static_cast<long>(y * stride + ky) - static_cast<long>(pad);
                const long ix = static_cast<long>(x * stride + kx) - static_cast<long>(pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<long>(H) || ix >= static_cast<long>(W))
                  continue;
                acc += k.at({o, c, ky, kx}) *
                       in.at({b, c, static_cast<std::size_t>(iy), static_cast<std::size_t>(ix)});
              }
          out[((b * O + o) * Ho + y) * Wo + x] = acc;
        }
  return out;
}

inline std::filesystem::path temp_dir(const std::string& name) {
  auto dir = std::filesystem::temp_directory_path() / ("scg_test_" + name);
  std::filesystem::remove_all(dir);
  std::filesystem::create_directories(dir);
  return dir;
}

// Direct per-window evaluation with its own window weights and two-pass
// moments.
inline double naive_ssim(const Tensor& a, const Tensor& b, SsimWindow window, double range) {
  const std::size_t n = window == SsimWindow::Uniform8 ? 8 : 11;
  std::vector<double> w(n * n);
  double total_w = 0.0;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x) {
      double v = 1.0;
      if (window == SsimWindow::Gaussian11) {
        const double dy = double(y) - 5.0, dx = double(x) - 5.0;
        v = std::exp(-(dx * dx + dy * dy) / (2.0 * 1.5 * 1.5));
      }
      w[y * n + x] = v;
      total_w += v;
    }
  for (double& v : w) v /= total_w;

  const double c1 = (0.01 * range) * (0.01 * range), c2 = (0.03 * range) * (0.03 * range);
  const std::size_t C = a.dim(0), H = a.dim(1), W = a.dim(2);
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t c = 0; c < C; ++c)
    for (std::size_t oy = 0; oy + n <= H; ++oy)
      for (std::size_t ox = 0; ox + n <= W; ++ox) {
        double mx = 0, my = 0;
        for (std::size_t y = 0; y < n; ++y)
          for (std::size_t x = 0; x < n; ++x) {
            mx += w[y * n + x] * a.at({c, oy + y, ox + x});
            my += w[y * n + x] * b.at({c, oy + y, ox + x});
          }
        double vx = 0, vy = 0, cov = 0;
        for (std::size_t y = 0; y < n; ++y)
          for (std::size_t x = 0; x < n; ++x) {
            const double dx = a.at({c, oy + y, ox + x}) - mx, dy = b.at({c, oy + y, ox + x}) - my;
            vx += w[y * n + x] * dx * dx;
            vy += w[y * n + x] * dy * dy;
            cov += w[y * n + x] * dx * dy;
          }
        sum += ((2 * mx * my + c1) * (2 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        ++count;
      }
  return sum / double(count);
}

}  // namespace scg::testing
