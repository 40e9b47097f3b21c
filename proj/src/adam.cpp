#include "scg/adam.hpp"

#include <cmath>

#include "scg/error.hpp"

namespace scg {

AdamState make_adam_state(const std::vector<NamedTensor>& params) {
  AdamState s;
  for (const auto& p : params) {
    s.first_moment.push_back(Tensor::zeros(p.tensor.shape()));
    s.second_moment.push_back(Tensor::zeros(p.tensor.shape()));
  }
  return s;
}

void adam_step(const std::vector<NamedTensor>& params, const AdamOptions& o, AdamState& state) {
  if (state.first_moment.size() != params.size() || state.second_moment.size() != params.size()) {
    throw ContractError("adam state does not match parameter list");
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (!params[i].tensor.has_grad()) {
      throw ContractError("adam_step: parameter " + params[i].name + " has no gradient");
    }
    if (state.first_moment[i].shape() != params[i].tensor.shape()) {
      throw ContractError("adam_step: state shape mismatch for " + params[i].name);
    }
  }
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(o.beta1, t);
  const double c2 = 1.0 - std::pow(o.beta2, t);
  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor p = params[i].tensor;
    auto w = p.mutable_data();
    auto g = p.grad();
    auto m = state.first_moment[i].mutable_data();
    auto v = state.second_moment[i].mutable_data();
    for (std::size_t j = 0; j < w.size(); ++j) {
      m[j] = o.beta1 * m[j] + (1.0 - o.beta1) * g[j];
      v[j] = o.beta2 * v[j] + (1.0 - o.beta2) * g[j] * g[j];
      const double mhat = m[j] / c1;
      const double vhat = v[j] / c2;
      w[j] -= o.lr * mhat / (std::sqrt(vhat) + o.eps);
      if (o.float32_storage) {
        w[j] = static_cast<float>(w[j]);
        m[j] = static_cast<float>(m[j]);
        v[j] = static_cast<float>(v[j]);
      }
    }
  }
}

Adam::Adam(std::vector<NamedTensor> params, AdamOptions options)
    : params_(std::move(params)), options_(options), state_(make_adam_state(params_)) {
  if (options_.float32_storage) {
    for (auto& p : params_)
      for (double& w : p.tensor.mutable_data()) w = static_cast<float>(w);
  }
}

void Adam::zero_grad() {
  for (auto& p : params_) p.tensor.zero_grad();
}

std::vector<NamedTensor> Adam::state_tensors(const std::string& prefix) const {
  std::vector<NamedTensor> out;
  for (std::size_t i = 0; i < params_.size(); ++i)
    out.push_back({prefix + "m/" + params_[i].name, state_.first_moment[i]});
  for (std::size_t i = 0; i < params_.size(); ++i)
    out.push_back({prefix + "v/" + params_[i].name, state_.second_moment[i]});
  return out;
}

}  // namespace scg
