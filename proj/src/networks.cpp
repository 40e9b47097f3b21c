#include "scg/networks.hpp"

#include "scg/error.hpp"
#include "scg/rng.hpp"

namespace scg {

std::size_t parameter_count(const std::vector<NamedTensor>& params) {
  std::size_t n = 0;
  for (const auto& p : params) n += p.tensor.numel();
  return n;
}

namespace {

void require_4d(const Tensor& x, std::size_t channels, const char* who) {
  if (x.rank() != 4 || x.dim(1) != channels) {
    throw DimensionError(std::string(who) + " expects [B," + std::to_string(channels) + ",H,W], got " +
                         shape_str(x.shape()));
  }
}

class ParamFactory {
 public:
  ParamFactory(std::uint64_t seed, std::string prefix, std::vector<NamedTensor>& out)
      : rng_(seed), prefix_(std::move(prefix)), out_(out) {}

  Tensor conv(const std::string& name, std::size_t o, std::size_t i, std::size_t k) {
    return add(name, randn({o, i, k, k}, rng_, kInitStddev, true));
  }
  Tensor constant(const std::string& name, std::size_t n, double v) {
    return add(name, Tensor::full({n}, v, true));
  }

 private:
  Tensor add(const std::string& name, Tensor t) {
    out_.push_back({prefix_ + name, t});
    return t;
  }
  Rng rng_;
  std::string prefix_;
  std::vector<NamedTensor>& out_;
};

}  // namespace

GeneratorNet::GeneratorNet(const GeneratorSpec& spec, std::uint64_t seed, const std::string& prefix)
    : spec_(spec) {
  if (spec.in_channels == 0 || spec.out_channels == 0 || spec.width == 0) {
    throw ConfigError("generator channel counts must be positive");
  }
  ParamFactory f(seed, prefix, params_);
  auto make = [&](const std::string& name, std::size_t in, std::size_t out, std::size_t k, std::size_t stride) {
    NormConv l;
    l.weight = f.conv(name + "/w", out, in, k);
    l.gamma = f.constant(name + "/gamma", out, 1.0);
    l.beta = f.constant(name + "/beta", out, 0.0);
    l.stride = stride;
    l.padding = k / 2;
    return l;
  };
  std::size_t ch = spec.width;
  stem_ = make("stem", spec.in_channels, ch, 7, 1);
  for (std::size_t i = 0; i < spec.downsample_stages; ++i, ch *= 2)
    down_.push_back(make("down" + std::to_string(i), ch, ch * 2, 3, 2));
  for (std::size_t i = 0; i < spec.residual_blocks; ++i) {
    const std::string name = "res" + std::to_string(i);
    auto a = make(name + "a", ch, ch, 3, 1);
    auto b = make(name + "b", ch, ch, 3, 1);
    blocks_.emplace_back(std::move(a), std::move(b));
  }
  for (std::size_t i = 0; i < spec.downsample_stages; ++i, ch /= 2)
    up_.push_back(make("up" + std::to_string(i), ch, ch / 2, 3, 1));
  head_weight_ = f.conv("head/w", spec.out_channels, ch, 7);
  head_bias_ = f.constant("head/b", spec.out_channels, 0.0);
}

Tensor GeneratorNet::norm_conv(const NormConv& l, const Tensor& x, bool activate) const {
  Tensor y = instance_norm(conv2d(x, l.weight, l.stride, l.padding), l.gamma, l.beta);
  return activate ? relu(y) : y;
}

Tensor GeneratorNet::forward(const Tensor& x) const {
  require_4d(x, spec_.in_channels, "generator");
  const std::size_t factor = std::size_t{1} << spec_.downsample_stages;
  if (x.dim(2) % factor != 0 || x.dim(3) % factor != 0) {
    throw DimensionError("generator input " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                         " must be divisible by " + std::to_string(factor));
  }
  Tensor h = norm_conv(stem_, x, true);
  for (const auto& l : down_) h = norm_conv(l, h, true);
  for (const auto& [a, b] : blocks_) h = add(h, norm_conv(b, norm_conv(a, h, true), false));
  for (const auto& l : up_) h = norm_conv(l, upsample_nearest(h, 2), true);
  return tanh(add_bias(conv2d(h, head_weight_, 1, 3), head_bias_));
}

std::size_t GeneratorNet::parameter_count() const { return scg::parameter_count(params_); }

DiscriminatorNet::DiscriminatorNet(const DiscriminatorSpec& spec, std::uint64_t seed, const std::string& prefix)
    : spec_(spec) {
  if (spec.in_channels == 0 || spec.width == 0 || spec.layers == 0) {
    throw ConfigError("discriminator sizes must be positive");
  }
  ParamFactory f(seed, prefix, params_);
  std::size_t in = spec.in_channels, out = spec.width;
  for (std::size_t i = 0; i < spec.layers; ++i, in = out, out *= 2) {
    const std::string name = "conv" + std::to_string(i);
    weights_.push_back(f.conv(name + "/w", out, in, 4));
    if (i > 0) {
      gammas_.push_back(f.constant(name + "/gamma", out, 1.0));
      betas_.push_back(f.constant(name + "/beta", out, 0.0));
    } else {
      gammas_.emplace_back();
      betas_.emplace_back();
    }
  }
  score_weight_ = f.conv("score/w", 1, in, 3);
  score_bias_ = f.constant("score/b", 1, 0.0);
}

Tensor DiscriminatorNet::forward(const Tensor& x) const {
  require_4d(x, spec_.in_channels, "discriminator");
  const std::size_t need = std::size_t{1} << spec_.layers;
  if (x.dim(2) < need || x.dim(3) < need) {
    throw DimensionError("discriminator input " + std::to_string(x.dim(2)) + "x" + std::to_string(x.dim(3)) +
                         " is smaller than its " + std::to_string(need) + "-pixel receptive stride");
  }
  Tensor h = x;
  for (std::size_t i = 0; i < weights_.size(); ++i) {
    h = conv2d(h, weights_[i], 2, 1);
    if (i > 0) h = instance_norm(h, gammas_[i], betas_[i]);
    h = leaky_relu(h, kLeakySlope);
  }
  return add_bias(conv2d(h, score_weight_, 1, 1), score_bias_);
}

std::size_t DiscriminatorNet::parameter_count() const { return scg::parameter_count(params_); }

}  // namespace scg
