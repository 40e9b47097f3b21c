#include <algorithm>
#include <cmath>
#include <limits>

#include "gemm.hpp"
#include "im2col.hpp"
#include "ops_common.hpp"
#include "scg/error.hpp"
#include "scg/tensor.hpp"

namespace scg {

using detail::make_op;
using detail::parent_grad;

namespace {

struct ConvGeom {
  std::size_t batch, in_ch, h, w, out_ch, k, stride, pad, ho, wo;
  std::size_t taps() const { return in_ch * k * k; }
  std::size_t pixels() const { return ho * wo; }
};

ConvGeom conv_geometry(const Tensor& input, const Tensor& kernel, std::size_t stride,
                       std::size_t padding) {
  if (input.rank() != 4 || kernel.rank() != 4) {
    throw DimensionError("conv2d expects [B,C,H,W] input and [O,C,k,k] kernel, got " +
                         shape_str(input.shape()) + " and " + shape_str(kernel.shape()));
  }
  if (kernel.dim(1) != input.dim(1)) {
    throw DimensionError("conv2d channel mismatch: input " + shape_str(input.shape()) +
                         ", kernel " + shape_str(kernel.shape()));
  }
  if (kernel.dim(2) != kernel.dim(3)) throw DimensionError("conv2d kernel must be square");
  if (stride == 0) throw ContractError("conv2d stride must be >= 1");
  const std::size_t k = kernel.dim(2);
  const std::size_t h = input.dim(2), w = input.dim(3);
  if (k > h + 2 * padding || k > w + 2 * padding) {
    throw DimensionError("conv2d kernel " + std::to_string(k) + " larger than padded input " +
                         shape_str(input.shape()));
  }
  return ConvGeom{input.dim(0),
                  input.dim(1),
                  h,
                  w,
                  kernel.dim(0),
                  k,
                  stride,
                  padding,
                  detail::conv_out_size(h, k, stride, padding),
                  detail::conv_out_size(w, k, stride, padding)};
}

std::vector<double> conv_forward_im2col(const ConvGeom& g, const double* in, const double* wt) {
  std::vector<double> out(g.batch * g.out_ch * g.pixels());
  std::vector<double> col(g.taps() * g.pixels());
  for (std::size_t b = 0; b < g.batch; ++b) {
    detail::im2col(in + b * g.in_ch * g.h * g.w, g.in_ch, g.h, g.w, g.k, g.stride, g.pad,
                   col.data());
    detail::gemm_nn(g.out_ch, g.pixels(), g.taps(), wt, col.data(),
                    out.data() + b * g.out_ch * g.pixels(), false);
  }
  return out;
}

void conv_backward_im2col(const ConvGeom& g, detail::Node& self) {
  const double* in = self.parents[0]->data.data();
  const double* wt = self.parents[1]->data.data();
  double* gin = parent_grad(self, 0);
  double* gwt = parent_grad(self, 1);
  std::vector<double> col(g.taps() * g.pixels());
  for (std::size_t b = 0; b < g.batch; ++b) {
    const double* gout = self.grad.data() + b * g.out_ch * g.pixels();
    if (gwt) {
      detail::im2col(in + b * g.in_ch * g.h * g.w, g.in_ch, g.h, g.w, g.k, g.stride, g.pad,
                     col.data());
      detail::gemm_nt(g.out_ch, g.taps(), g.pixels(), gout, col.data(), gwt, true);
    }
    if (gin) {
      detail::gemm_tn(g.taps(), g.pixels(), g.out_ch, wt, gout, col.data(), false);
      detail::col2im(col.data(), g.in_ch, g.h, g.w, g.k, g.stride, g.pad,
                     gin + b * g.in_ch * g.h * g.w);
    }
  }
}

// Straight loops over (b, o, y, x, c, ky, kx); kept as the reference path.
std::vector<double> conv_forward_direct(const ConvGeom& g, const double* in, const double* wt) {
  std::vector<double> out(g.batch * g.out_ch * g.pixels(), 0.0);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_ch; ++o)
      for (std::size_t y = 0; y < g.ho; ++y)
        for (std::size_t x = 0; x < g.wo; ++x) {
          double acc = 0.0;
          for (std::size_t c = 0; c < g.in_ch; ++c)
            for (std::size_t ky = 0; ky < g.k; ++ky)
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) -
                                          static_cast<std::ptrdiff_t>(g.pad);
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                    ix >= static_cast<std::ptrdiff_t>(g.w))
                  continue;
                acc += wt[((o * g.in_ch + c) * g.k + ky) * g.k + kx] *
                       in[((b * g.in_ch + c) * g.h + iy) * g.w + ix];
              }
          out[((b * g.out_ch + o) * g.ho + y) * g.wo + x] = acc;
        }
  return out;
}

void conv_backward_direct(const ConvGeom& g, detail::Node& self) {
  const double* in = self.parents[0]->data.data();
  const double* wt = self.parents[1]->data.data();
  double* gin = parent_grad(self, 0);
  double* gwt = parent_grad(self, 1);
  for (std::size_t b = 0; b < g.batch; ++b)
    for (std::size_t o = 0; o < g.out_ch; ++o)
      for (std::size_t y = 0; y < g.ho; ++y)
        for (std::size_t x = 0; x < g.wo; ++x) {
          const double up = self.grad[((b * g.out_ch + o) * g.ho + y) * g.wo + x];
          for (std::size_t c = 0; c < g.in_ch; ++c)
            for (std::size_t ky = 0; ky < g.k; ++ky)
              for (std::size_t kx = 0; kx < g.k; ++kx) {
                const std::ptrdiff_t iy = static_cast<std::ptrdiff_t>(y * g.stride + ky) -
                                          static_cast<std::ptrdiff_t>(g.pad);
                const std::ptrdiff_t ix = static_cast<std::ptrdiff_t>(x * g.stride + kx) -
                                          static_cast<std::ptrdiff_t>(g.pad);
                if (iy < 0 || ix < 0 || iy >= static_cast<std::ptrdiff_t>(g.h) ||
                    ix >= static_cast<std::ptrdiff_t>(g.w))
                  continue;
                const std::size_t wi = ((o * g.in_ch + c) * g.k + ky) * g.k + kx;
                const std::size_t ii = ((b * g.in_ch + c) * g.h + iy) * g.w + ix;
                if (gwt) gwt[wi] += up * in[ii];
                if (gin) gin[ii] += up * wt[wi];
              }
        }
}

}  // namespace

Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
              std::size_t padding, ConvAlgo algo) {
  const ConvGeom g = conv_geometry(input, kernel, stride, padding);
  std::vector<double> out = algo == ConvAlgo::Im2col
                                ? conv_forward_im2col(g, input.data().data(), kernel.data().data())
                                : conv_forward_direct(g, input.data().data(), kernel.data().data());
  return make_op({g.batch, g.out_ch, g.ho, g.wo}, std::move(out), OpKind::Conv2d,
                 {&input, &kernel}, [g, algo](detail::Node& self) {
                   if (algo == ConvAlgo::Im2col) {
                     conv_backward_im2col(g, self);
                   } else {
                     conv_backward_direct(g, self);
                   }
                 });
}

Tensor avg_pool2d(const Tensor& input, std::size_t kernel, std::size_t stride) {
  if (input.rank() != 4) throw DimensionError("avg_pool2d expects [B,C,H,W]");
  if (kernel == 0 || stride == 0) throw ContractError("avg_pool2d kernel and stride must be >= 1");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  if (kernel > h || kernel > w) {
    throw DimensionError("avg_pool2d kernel " + std::to_string(kernel) + " exceeds input " +
                         shape_str(input.shape()));
  }
  const std::size_t ho = (h - kernel) / stride + 1, wo = (w - kernel) / stride + 1;
  const double inv = 1.0 / static_cast<double>(kernel * kernel);
  std::vector<double> out(planes * ho * wo);
  auto in = input.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x) {
        double acc = 0.0;
        for (std::size_t ky = 0; ky < kernel; ++ky)
          for (std::size_t kx = 0; kx < kernel; ++kx)
            acc += in[(p * h + y * stride + ky) * w + x * stride + kx];
        out[(p * ho + y) * wo + x] = acc * inv;
      }
  return make_op({input.dim(0), input.dim(1), ho, wo}, std::move(out), OpKind::AvgPool2d,
                 {&input}, [=](detail::Node& self) {
                   double* g = parent_grad(self, 0);
                   for (std::size_t p = 0; p < planes; ++p)
                     for (std::size_t y = 0; y < ho; ++y)
                       for (std::size_t x = 0; x < wo; ++x) {
                         const double up = self.grad[(p * ho + y) * wo + x] * inv;
                         for (std::size_t ky = 0; ky < kernel; ++ky)
                           for (std::size_t kx = 0; kx < kernel; ++kx)
                             g[(p * h + y * stride + ky) * w + x * stride + kx] += up;
                       }
                 });
}

Tensor upsample_nearest(const Tensor& input, std::size_t factor) {
  if (input.rank() != 4) throw DimensionError("upsample_nearest expects [B,C,H,W]");
  if (factor == 0) throw ContractError("upsample factor must be >= 1");
  const std::size_t planes = input.dim(0) * input.dim(1);
  const std::size_t h = input.dim(2), w = input.dim(3);
  const std::size_t ho = h * factor, wo = w * factor;
  std::vector<double> out(planes * ho * wo);
  auto in = input.data();
  for (std::size_t p = 0; p < planes; ++p)
    for (std::size_t y = 0; y < ho; ++y)
      for (std::size_t x = 0; x < wo; ++x)
        out[(p * ho + y) * wo + x] = in[(p * h + y / factor) * w + x / factor];
  return make_op({input.dim(0), input.dim(1), ho, wo}, std::move(out),
                 OpKind::UpsampleNearest, {&input}, [=](detail::Node& self) {
                   double* g = parent_grad(self, 0);
                   for (std::size_t p = 0; p < planes; ++p)
                     for (std::size_t y = 0; y < ho; ++y)
                       for (std::size_t x = 0; x < wo; ++x)
                         g[(p * h + y / factor) * w + x / factor] +=
                             self.grad[(p * ho + y) * wo + x];
                 });
}

Tensor instance_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta, double eps) {
  if (input.rank() != 4) throw DimensionError("instance_norm expects [B,C,H,W]");
  const std::size_t batch = input.dim(0), channels = input.dim(1);
  const std::size_t n = input.dim(2) * input.dim(3);
  const bool affine = gamma.defined();
  if (affine != beta.defined()) throw ContractError("instance_norm needs both gamma and beta");
  if (affine && (gamma.shape() != Shape{channels} || beta.shape() != Shape{channels})) {
    throw DimensionError("instance_norm affine parameters must have shape [C]");
  }
  std::vector<double> xhat(input.numel());
  std::vector<double> inv_std(batch * channels);
  auto in = input.data();
  for (std::size_t p = 0; p < batch * channels; ++p) {
    const double* x = in.data() + p * n;
    double mu = 0.0;
    for (std::size_t i = 0; i < n; ++i) mu += x[i];
    mu /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) var += (x[i] - mu) * (x[i] - mu);
    var /= static_cast<double>(n);
    inv_std[p] = 1.0 / std::sqrt(var + eps);
    for (std::size_t i = 0; i < n; ++i) xhat[p * n + i] = (x[i] - mu) * inv_std[p];
  }
  std::vector<double> out = xhat;
  if (affine) {
    auto gm = gamma.data(), bt = beta.data();
    for (std::size_t p = 0; p < batch * channels; ++p) {
      const std::size_t c = p % channels;
      for (std::size_t i = 0; i < n; ++i) out[p * n + i] = gm[c] * xhat[p * n + i] + bt[c];
    }
  }
  std::vector<Tensor> inputs{input};
  if (affine) {
    inputs.push_back(gamma);
    inputs.push_back(beta);
  }
  return make_op(
      input.shape(), std::move(out), OpKind::InstanceNorm, inputs,
      [=, xhat = std::move(xhat), inv_std = std::move(inv_std)](detail::Node& self) {
        double* gx = parent_grad(self, 0);
        double* gg = affine ? parent_grad(self, 1) : nullptr;
        double* gb = affine ? parent_grad(self, 2) : nullptr;
        const double* gm = affine ? self.parents[1]->data.data() : nullptr;
        const double dn = static_cast<double>(n);
        std::vector<double> dxhat(n);
        for (std::size_t p = 0; p < batch * channels; ++p) {
          const std::size_t c = p % channels;
          const double* up = self.grad.data() + p * n;
          const double* xh = xhat.data() + p * n;
          if (gg || gb) {
            double sg = 0.0, sb = 0.0;
            for (std::size_t i = 0; i < n; ++i) {
              sg += up[i] * xh[i];
              sb += up[i];
            }
            if (gg) gg[c] += sg;
            if (gb) gb[c] += sb;
          }
          if (!gx) continue;
          const double scale_c = affine ? gm[c] : 1.0;
          double s1 = 0.0, s2 = 0.0;
          for (std::size_t i = 0; i < n; ++i) {
            dxhat[i] = up[i] * scale_c;
            s1 += dxhat[i];
            s2 += dxhat[i] * xh[i];
          }
          for (std::size_t i = 0; i < n; ++i)
            gx[p * n + i] += inv_std[p] / dn * (dn * dxhat[i] - s1 - xh[i] * s2);
        }
      });
}

Tensor unfold(const Tensor& x, std::size_t k) {
  if (x.rank() != 3) throw DimensionError("unfold expects [C,H,W], got " + shape_str(x.shape()));
  const std::size_t c = x.dim(0), h = x.dim(1), w = x.dim(2);
  if (k == 0 || k > h || k > w) {
    throw DimensionError("unfold patch size " + std::to_string(k) + " does not fit map " +
                         shape_str(x.shape()));
  }
  const std::size_t gh = h - k + 1, gw = w - k + 1, m = gh * gw, len = c * k * k;
  std::vector<double> out(m * len);
  auto in = x.data();
  for (std::size_t oy = 0; oy < gh; ++oy)
    for (std::size_t ox = 0; ox < gw; ++ox) {
      double* row = out.data() + (oy * gw + ox) * len;
      std::size_t t = 0;
      for (std::size_t ch = 0; ch < c; ++ch)
        for (std::size_t ky = 0; ky < k; ++ky)
          for (std::size_t kx = 0; kx < k; ++kx) row[t++] = in[(ch * h + oy + ky) * w + ox + kx];
    }
  return make_op({m, len}, std::move(out), OpKind::Unfold, {&x}, [=](detail::Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t oy = 0; oy < gh; ++oy)
      for (std::size_t ox = 0; ox < gw; ++ox) {
        const double* row = self.grad.data() + (oy * gw + ox) * len;
        std::size_t t = 0;
        for (std::size_t ch = 0; ch < c; ++ch)
          for (std::size_t ky = 0; ky < k; ++ky)
            for (std::size_t kx = 0; kx < k; ++kx) g[(ch * h + oy + ky) * w + ox + kx] += row[t++];
      }
  });
}

Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels) {
  if (logits.rank() != 2) throw DimensionError("cross_entropy expects [B,K] logits");
  const std::size_t batch = logits.dim(0), classes = logits.dim(1);
  if (batch == 0) throw ContractError("cross_entropy on an empty batch");
  if (labels.size() != batch) throw DimensionError("cross_entropy label count mismatch");
  auto in = logits.data();
  std::vector<double> probs(batch * classes);
  std::vector<std::size_t> lab(labels.begin(), labels.end());
  double loss = 0.0;
  for (std::size_t b = 0; b < batch; ++b) {
    if (lab[b] >= classes) throw ContractError("cross_entropy label out of range");
    const double* row = in.data() + b * classes;
    const double mx = *std::max_element(row, row + classes);
    double z = 0.0;
    for (std::size_t j = 0; j < classes; ++j) z += std::exp(row[j] - mx);
    for (std::size_t j = 0; j < classes; ++j) probs[b * classes + j] = std::exp(row[j] - mx) / z;
    loss -= row[lab[b]] - mx - std::log(z);
  }
  loss /= static_cast<double>(batch);
  return make_op({}, {loss}, OpKind::CrossEntropy, {&logits},
                 [=, probs = std::move(probs), lab = std::move(lab)](detail::Node& self) {
                   double* g = parent_grad(self, 0);
                   const double up = self.grad[0] / static_cast<double>(batch);
                   for (std::size_t b = 0; b < batch; ++b)
                     for (std::size_t j = 0; j < classes; ++j) {
                       const double target = j == lab[b] ? 1.0 : 0.0;
                       g[b * classes + j] += up * (probs[b * classes + j] - target);
                     }
                 });
}

}  // namespace scg
