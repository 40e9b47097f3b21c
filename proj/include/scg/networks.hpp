#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "scg/tensor.hpp"

namespace scg {

struct GeneratorSpec {
  std::size_t in_channels = 3;
  std::size_t out_channels = 1;
  std::size_t width = 16;
  std::size_t residual_blocks = 4;
  std::size_t downsample_stages = 2;
};

// conv7 stem, stride-2 downsampling convs, residual blocks, nearest-upsample
// + conv3 stages, conv7 head with bias and tanh. Every inner conv is followed
// by affine instance normalization and ReLU.
class GeneratorNet {
 public:
  GeneratorNet(const GeneratorSpec& spec, std::uint64_t seed, const std::string& prefix);

  // [B, in, H, W] -> [B, out, H, W] in [-1, 1]. H and W must be divisible by
  // 2^downsample_stages.
  Tensor forward(const Tensor& x) const;
  Tensor operator()(const Tensor& x) const { return forward(x); }

  const GeneratorSpec& spec() const { return spec_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;

 private:
  struct NormConv {
    Tensor weight, gamma, beta;
    std::size_t stride = 1, padding = 1;
  };
  Tensor norm_conv(const NormConv& layer, const Tensor& x, bool activate) const;

  GeneratorSpec spec_;
  std::vector<NamedTensor> params_;
  NormConv stem_;
  std::vector<NormConv> down_, up_;
  std::vector<std::pair<NormConv, NormConv>> blocks_;
  Tensor head_weight_, head_bias_;
};

struct DiscriminatorSpec {
  std::size_t in_channels = 1;
  std::size_t width = 16;
  std::size_t layers = 3;  // stride-2 4x4 convs before the score conv
};

// Patch discriminator: `layers` 4x4 stride-2 convs with leaky ReLU 0.2
// (instance norm on all but the first), then a 3x3 conv to one raw score
// channel. A 64x64 input with 3 layers yields an 8x8 score map.
class DiscriminatorNet {
 public:
  DiscriminatorNet(const DiscriminatorSpec& spec, std::uint64_t seed, const std::string& prefix);

  Tensor forward(const Tensor& x) const;
  Tensor operator()(const Tensor& x) const { return forward(x); }

  const DiscriminatorSpec& spec() const { return spec_; }
  const std::vector<NamedTensor>& parameters() const { return params_; }
  std::size_t parameter_count() const;

 private:
  DiscriminatorSpec spec_;
  std::vector<NamedTensor> params_;
  std::vector<Tensor> weights_, gammas_, betas_;
  Tensor score_weight_, score_bias_;
};

inline constexpr double kInitStddev = 0.02;
inline constexpr double kLeakySlope = 0.2;

std::size_t parameter_count(const std::vector<NamedTensor>& params);

}  // namespace scg
