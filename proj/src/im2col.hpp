#pragma once

#include <cstddef>

namespace scg::detail {

inline std::size_t conv_out_size(std::size_t in, std::size_t k, std::size_t stride,
                                 std::size_t pad) {
  return (in + 2 * pad - k) / stride + 1;
}

// Lowers one [C,H,W] image into a [C*k*k, Ho*Wo] column matrix. Row t is
// (c*k + ky)*k + kx, so every column is a patch vectorized as
// (channel, row, col). Out-of-bounds taps read zero.
template <class T>
void im2col(const T* in, std::size_t channels, std::size_t h, std::size_t w, std::size_t k,
            std::size_t stride, std::size_t pad, double* col) {
  const std::size_t ho = conv_out_size(h, k, stride, pad);
  const std::size_t wo = conv_out_size(w, k, stride, pad);
  const std::size_t cols = ho * wo;
  for (std::size_t c = 0; c < channels; ++c) {
    const T* plane = in + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        double* row = col + ((c * k + ky) * k + kx) * cols;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          double* dst = row + oy * wo;
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) {
            for (std::size_t ox = 0; ox < wo; ++ox) dst[ox] = 0.0;
            continue;
          }
          const T* src = plane + static_cast<std::size_t>(iy) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            dst[ox] = (ix < 0 || ix >= static_cast<std::ptrdiff_t>(w))
                          ? 0.0
                          : static_cast<double>(src[ix]);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds the column matrix back into the image.
inline void col2im(const double* col, std::size_t channels, std::size_t h, std::size_t w,
                   std::size_t k, std::size_t stride, std::size_t pad, double* out) {
  const std::size_t ho = conv_out_size(h, k, stride, pad);
  const std::size_t wo = conv_out_size(w, k, stride, pad);
  const std::size_t cols = ho * wo;
  for (std::size_t c = 0; c < channels; ++c) {
    double* plane = out + c * h * w;
    for (std::size_t ky = 0; ky < k; ++ky) {
      for (std::size_t kx = 0; kx < k; ++kx) {
        const double* row = col + ((c * k + ky) * k + kx) * cols;
        for (std::size_t oy = 0; oy < ho; ++oy) {
          const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(oy * stride + ky) -
                                    static_cast<std::ptrdiff_t>(pad);
          if (iy < 0 || iy >= static_cast<std::ptrdiff_t>(h)) continue;
          double* dst = plane + static_cast<std::size_t>(iy) * w;
          for (std::size_t ox = 0; ox < wo; ++ox) {
            const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(ox * stride + kx) -
                                      static_cast<std::ptrdiff_t>(pad);
            if (ix >= 0 && ix < static_cast<std::ptrdiff_t>(w)) dst[ix] += row[oy * wo + ox];
          }
        }
      }
    }
  }
}

}  // namespace scg::detail
