#include "scg/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "scg/error.hpp"
#include "scg/rng.hpp"

namespace scg {

double relative_error(double analytic, double numeric) {
  const double denom = std::max({std::fabs(analytic), std::fabs(numeric), 1e-8});
  return std::fabs(analytic - numeric) / denom;
}

namespace {

double eval_scalar(const Tensor& t) {
  if (t.numel() != 1) throw ContractError("grad_check needs a scalar-valued function");
  return t.item();
}

}  // namespace

double grad_check(const std::function<Tensor(const Tensor&)>& f, const Tensor& x, double step) {
  Tensor leaf = x.clone(true);
  const Tensor y = f(leaf);
  const double y0 = eval_scalar(y);
  if (eval_scalar(f(x.clone())) != y0) {
    throw ContractError("grad_check: function is not deterministic (seed its noise)");
  }
  backward(y);
  const std::vector<double> analytic(leaf.grad().begin(), leaf.grad().end());

  double worst = 0.0;
  Tensor probe = x.clone();
  auto values = probe.mutable_data();
  for (std::size_t i = 0; i < values.size(); ++i) {
    const double orig = values[i];
    values[i] = orig + step;
    const double fp = eval_scalar(f(probe));
    values[i] = orig - step;
    const double fm = eval_scalar(f(probe));
    values[i] = orig;
    worst = std::max(worst, relative_error(analytic[i], (fp - fm) / (2.0 * step)));
  }
  return worst;
}

std::vector<ParamCheck> grad_check_params(const std::function<Tensor()>& loss,
                                          const std::vector<NamedTensor>& params,
                                          double step, std::size_t samples_per_param,
                                          std::uint64_t seed) {
  for (const auto& p : params) {
    Tensor t = p.tensor;
    t.zero_grad();
  }
  const Tensor y = loss();
  const double y0 = eval_scalar(y);
  if (eval_scalar(loss()) != y0) {
    throw ContractError("grad_check: loss is not deterministic (seed its noise)");
  }
  backward(y);

  Rng rng(seed);
  std::vector<ParamCheck> report;
  for (const auto& named : params) {
    Tensor t = named.tensor;
    if (!t.has_grad()) throw ContractError("parameter " + named.name + " received no gradient");
    const std::vector<double> analytic(t.grad().begin(), t.grad().end());
    std::vector<std::size_t> idx(t.numel());
    std::iota(idx.begin(), idx.end(), 0);
    if (samples_per_param > 0 && samples_per_param < idx.size()) {
      std::shuffle(idx.begin(), idx.end(), rng);
      idx.resize(samples_per_param);
      std::sort(idx.begin(), idx.end());
    }
    ParamCheck check{named.name, 0.0, idx.size()};
    auto values = t.mutable_data();
    for (std::size_t i : idx) {
      const double orig = values[i];
      values[i] = orig + step;
      const double fp = eval_scalar(loss());
      values[i] = orig - step;
      const double fm = eval_scalar(loss());
      values[i] = orig;
      check.max_rel_error =
          std::max(check.max_rel_error, relative_error(analytic[i], (fp - fm) / (2.0 * step)));
    }
    report.push_back(check);
  }
  return report;
}

}  // namespace scg
