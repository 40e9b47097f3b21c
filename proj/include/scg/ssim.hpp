#pragma once

#include <cstddef>

#include "scg/tensor.hpp"

namespace scg {

enum class SsimWindow { Uniform8, Gaussian11 };

struct SsimParams {
  SsimWindow window = SsimWindow::Gaussian11;
  double k1 = 0.01;
  double k2 = 0.03;
  // Span of the pixel values; 2 for internal [-1,1] tensors, 1 for [0,1].
  double dynamic_range = 2.0;
  double gaussian_sigma = 1.5;
};

// Mean SSIM over all fully contained windows (stride 1) and all channels.
// Accepts [C,H,W] or [H,W]; both inputs must share a shape at least as large
// as the window.
double ssim(const Tensor& a, const Tensor& b, const SsimParams& params = {});

// Normalized window weights, row-major size x size.
std::vector<double> ssim_window(const SsimParams& params);
std::size_t ssim_window_size(SsimWindow window);

}  // namespace scg
