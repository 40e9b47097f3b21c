#pragma once

#include <cstdint>
#include <vector>

#include "scg/tensor.hpp"

namespace scg {

struct AdamOptions {
  double lr = 0.001;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  // Keep parameters and moments representable in float32 after every update,
  // so float32 checkpoints capture the optimizer exactly.
  bool float32_storage = false;
};

struct AdamState {
  std::vector<Tensor> first_moment;
  std::vector<Tensor> second_moment;
  std::uint64_t step = 0;
};

AdamState make_adam_state(const std::vector<NamedTensor>& params);

// One bias-corrected Adam update applied in place to every parameter.
void adam_step(const std::vector<NamedTensor>& params, const AdamOptions& options,
               AdamState& state);

class Adam {
 public:
  Adam(std::vector<NamedTensor> params, AdamOptions options);

  void step() { adam_step(params_, options_, state_); }
  void zero_grad();
  void set_lr(double lr) { options_.lr = lr; }
  double lr() const { return options_.lr; }

  const std::vector<NamedTensor>& params() const { return params_; }
  AdamState& state() { return state_; }
  const AdamState& state() const { return state_; }

  // Moments as named tensors "<prefix>m/<param>" and "<prefix>v/<param>".
  std::vector<NamedTensor> state_tensors(const std::string& prefix) const;
  void restore_step(std::uint64_t step) { state_.step = step; }

 private:
  std::vector<NamedTensor> params_;
  AdamOptions options_;
  AdamState state_;
};

}  // namespace scg
