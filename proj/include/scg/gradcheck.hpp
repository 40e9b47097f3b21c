#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "scg/tensor.hpp"

namespace scg {

// |analytic - numeric| / max(|analytic|, |numeric|, 1e-8)
double relative_error(double analytic, double numeric);

// Central-difference check of d f(x) / d x over every element of x.
// f must be deterministic; a second evaluation that differs bitwise raises
// ContractError. Returns the maximum relative error.
double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x,
                  double step = 1e-5);

struct ParamCheck {
  std::string name;
  double max_rel_error = 0.0;
  std::size_t checked = 0;
};

// Checks a scalar loss against a set of leaf parameters by perturbing them in
// place (values are restored). At most `samples_per_param` elements of each
// parameter are checked, chosen by `seed`; 0 means all.
std::vector<ParamCheck> grad_check_params(const std::function<Tensor()>& loss,
                                          const std::vector<NamedTensor>& params,
                                          double step = 1e-5,
                                          std::size_t samples_per_param = 0,
                                          std::uint64_t seed = 0);

}  // namespace scg
