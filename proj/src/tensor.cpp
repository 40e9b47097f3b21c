#include "scg/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include "gemm.hpp"
#include "ops_common.hpp"
#include "scg/error.hpp"

namespace scg {

std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<std::size_t>());
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

const char* op_name(OpKind op) {
  switch (op) {
    case OpKind::Leaf: return "leaf";
    case OpKind::Add: return "add";
    case OpKind::Sub: return "sub";
    case OpKind::Mul: return "mul";
    case OpKind::Scale: return "scale";
    case OpKind::AddScalar: return "add_scalar";
    case OpKind::AddBias: return "add_bias";
    case OpKind::Relu: return "relu";
    case OpKind::LeakyRelu: return "leaky_relu";
    case OpKind::Tanh: return "tanh";
    case OpKind::Abs: return "abs";
    case OpKind::Sum: return "sum";
    case OpKind::Mean: return "mean";
    case OpKind::L2Norm: return "l2_norm";
    case OpKind::MatMul: return "matmul";
    case OpKind::Transpose: return "transpose";
    case OpKind::Reshape: return "reshape";
    case OpKind::Slice: return "slice";
    case OpKind::Concat: return "concat";
    case OpKind::Conv2d: return "conv2d";
    case OpKind::AvgPool2d: return "avg_pool2d";
    case OpKind::UpsampleNearest: return "upsample_nearest";
    case OpKind::InstanceNorm: return "instance_norm";
    case OpKind::Unfold: return "unfold";
    case OpKind::CrossEntropy: return "cross_entropy";
  }
  return "?";
}

void detail::Node::ensure_grad() {
  if (grad.size() != data.size()) grad.assign(data.size(), 0.0);
}

namespace {

#ifdef NDEBUG
std::atomic<bool> g_finite_checks{false};
#else
std::atomic<bool> g_finite_checks{true};
#endif

std::shared_ptr<detail::Node> new_leaf(Shape shape, std::vector<double> data,
                                       bool requires_grad) {
  if (shape_numel(shape) != data.size()) {
    throw DimensionError("tensor data length " + std::to_string(data.size()) +
                         " does not match shape " + shape_str(shape));
  }
  auto node = std::make_shared<detail::Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->requires_grad = requires_grad;
  return node;
}

const detail::Node& checked(const std::shared_ptr<detail::Node>& node) {
  if (!node) throw ContractError("operation on an undefined tensor");
  return *node;
}

}  // namespace

void set_finite_checks(bool enabled) { g_finite_checks = enabled; }
bool finite_checks_enabled() { return g_finite_checks; }

// ---- Tensor ----

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
  return full(std::move(shape), 0.0, requires_grad);
}

Tensor Tensor::full(Shape shape, double value, bool requires_grad) {
  const std::size_t n = shape_numel(shape);
  return Tensor(new_leaf(std::move(shape), std::vector<double>(n, value), requires_grad));
}

Tensor Tensor::from_data(Shape shape, std::vector<double> data, bool requires_grad) {
  return Tensor(new_leaf(std::move(shape), std::move(data), requires_grad));
}

Tensor Tensor::scalar(double value, bool requires_grad) {
  return Tensor(new_leaf({}, {value}, requires_grad));
}

const Shape& Tensor::shape() const { return checked(node_).shape; }

std::size_t Tensor::dim(std::size_t axis) const {
  const auto& s = shape();
  if (axis >= s.size()) {
    throw DimensionError("axis " + std::to_string(axis) + " out of range for shape " +
                         shape_str(s));
  }
  return s[axis];
}

std::size_t Tensor::numel() const { return checked(node_).data.size(); }

std::span<const double> Tensor::data() const { return checked(node_).data; }

std::span<double> Tensor::mutable_data() {
  checked(node_);
  return node_->data;
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ContractError("item() on a tensor of shape " + shape_str(shape()));
  }
  return node_->data[0];
}

double Tensor::at(std::initializer_list<std::size_t> index) const {
  const auto& s = shape();
  if (index.size() != s.size()) throw DimensionError("index rank mismatch");
  std::size_t flat = 0;
  std::size_t axis = 0;
  for (std::size_t i : index) {
    if (i >= s[axis]) throw DimensionError("index out of range");
    flat = flat * s[axis] + i;
    ++axis;
  }
  return node_->data[flat];
}

bool Tensor::requires_grad() const { return checked(node_).requires_grad; }

void Tensor::set_requires_grad(bool value) {
  checked(node_);
  if (!is_leaf()) throw ContractError("requires_grad can only be set on leaves");
  node_->requires_grad = value;
}

bool Tensor::has_grad() const {
  const auto& n = checked(node_);
  return !n.grad.empty() && n.grad.size() == n.data.size();
}

std::span<const double> Tensor::grad() const {
  if (!has_grad()) throw ContractError("tensor has no gradient");
  return node_->grad;
}

std::span<double> Tensor::mutable_grad() {
  checked(node_);
  node_->ensure_grad();
  return node_->grad;
}

void Tensor::zero_grad() {
  checked(node_);
  node_->grad.clear();
}

bool Tensor::is_leaf() const { return checked(node_).op == OpKind::Leaf; }

OpKind Tensor::op() const { return checked(node_).op; }

Tensor Tensor::detach() const {
  const auto& n = checked(node_);
  return Tensor(new_leaf(n.shape, n.data, false));
}

Tensor Tensor::clone(bool requires_grad) const {
  const auto& n = checked(node_);
  return Tensor(new_leaf(n.shape, n.data, requires_grad));
}

// ---- tape ----

void backward(const Tensor& root) {
  if (!root.defined()) throw ContractError("backward on an undefined tensor");
  if (root.numel() != 1) {
    throw ContractError("backward requires a scalar root, got shape " +
                        shape_str(root.shape()));
  }
  if (!root.requires_grad()) {
    throw ContractError("backward root does not participate in the tape");
  }

  // Iterative post-order DFS gives a topological order (parents first).
  std::vector<detail::Node*> order;
  std::unordered_set<detail::Node*> seen;
  std::vector<std::pair<detail::Node*, std::size_t>> stack;
  stack.emplace_back(root.node().get(), 0);
  seen.insert(root.node().get());
  while (!stack.empty()) {
    auto& [node, next] = stack.back();
    if (next < node->parents.size()) {
      detail::Node* parent = node->parents[next++].get();
      if (parent->requires_grad && seen.insert(parent).second) {
        stack.emplace_back(parent, 0);
      }
    } else {
      order.push_back(node);
      stack.pop_back();
    }
  }

  for (detail::Node* node : order) {
    if (node->op == OpKind::Leaf) {
      node->ensure_grad();
    } else {
      node->grad.assign(node->data.size(), 0.0);
    }
  }
  root.node()->grad[0] += 1.0;
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    if ((*it)->backward) (*it)->backward(**it);
  }
}

// ---- op plumbing ----

namespace detail {

void check_finite(std::span<const double> values, OpKind op) {
  if (!g_finite_checks) return;
  for (double v : values) {
    if (!std::isfinite(v)) {
      throw NumericError(std::string("non-finite value produced by ") + op_name(op));
    }
  }
}

Tensor make_op(Shape shape, std::vector<double> data, OpKind op,
               std::initializer_list<const Tensor*> inputs, BackwardFn fn) {
  check_finite(data, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool any = false;
  for (const Tensor* t : inputs) any = any || t->requires_grad();
  if (any) {
    node->requires_grad = true;
    for (const Tensor* t : inputs) node->parents.push_back(t->node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

Tensor make_op(Shape shape, std::vector<double> data, OpKind op,
               const std::vector<Tensor>& inputs, BackwardFn fn) {
  check_finite(data, op);
  auto node = std::make_shared<Node>();
  node->shape = std::move(shape);
  node->data = std::move(data);
  node->op = op;
  bool any = false;
  for (const Tensor& t : inputs) any = any || t.requires_grad();
  if (any) {
    node->requires_grad = true;
    for (const Tensor& t : inputs) node->parents.push_back(t.node());
    node->backward = std::move(fn);
  }
  return Tensor(std::move(node));
}

double* parent_grad(Node& self, std::size_t i) {
  Node& p = *self.parents[i];
  if (!p.requires_grad) return nullptr;
  p.ensure_grad();
  return p.grad.data();
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* what) {
  if (a.shape() != b.shape()) {
    throw DimensionError(std::string(what) + ": shape " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
  }
}

}  // namespace detail

using detail::make_op;
using detail::parent_grad;

// ---- elementwise ----

Tensor add(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "add");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] + y[i];
  return make_op(a.shape(), std::move(out), OpKind::Add, {&a, &b}, [](detail::Node& self) {
    for (std::size_t p = 0; p < 2; ++p) {
      if (double* g = parent_grad(self, p)) {
        for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
      }
    }
  });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "sub");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] - y[i];
  return make_op(a.shape(), std::move(out), OpKind::Sub, {&a, &b}, [](detail::Node& self) {
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
    }
    if (double* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] -= self.grad[i];
    }
  });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  detail::require_same_shape(a, b, "mul");
  std::vector<double> out(a.numel());
  auto x = a.data(), y = b.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = x[i] * y[i];
  return make_op(a.shape(), std::move(out), OpKind::Mul, {&a, &b}, [](detail::Node& self) {
    const auto& xa = self.parents[0]->data;
    const auto& xb = self.parents[1]->data;
    if (double* g = parent_grad(self, 0)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * xb[i];
    }
    if (double* g = parent_grad(self, 1)) {
      for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i] * xa[i];
    }
  });
}

Tensor scale(const Tensor& x, double factor) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v *= factor;
  return make_op(x.shape(), std::move(out), OpKind::Scale, {&x},
                 [factor](detail::Node& self) {
                   double* g = parent_grad(self, 0);
                   for (std::size_t i = 0; i < self.grad.size(); ++i)
                     g[i] += factor * self.grad[i];
                 });
}

Tensor add_scalar(const Tensor& x, double value) {
  std::vector<double> out(x.data().begin(), x.data().end());
  for (double& v : out) v += value;
  return make_op(x.shape(), std::move(out), OpKind::AddScalar, {&x}, [](detail::Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
  });
}

Tensor neg(const Tensor& x) { return scale(x, -1.0); }

Tensor add_bias(const Tensor& x, const Tensor& bias) {
  if (x.rank() < 2 || bias.rank() != 1 || bias.dim(0) != x.dim(1)) {
    throw DimensionError("add_bias: bias " + shape_str(bias.shape()) + " vs input " +
                         shape_str(x.shape()));
  }
  const std::size_t outer = x.dim(0), channels = x.dim(1);
  const std::size_t inner = x.numel() / (outer * channels);
  std::vector<double> out(x.data().begin(), x.data().end());
  auto b = bias.data();
  for (std::size_t o = 0; o < outer; ++o)
    for (std::size_t c = 0; c < channels; ++c) {
      double* row = out.data() + (o * channels + c) * inner;
      for (std::size_t i = 0; i < inner; ++i) row[i] += b[c];
    }
  return make_op(x.shape(), std::move(out), OpKind::AddBias, {&x, &bias},
                 [outer, channels, inner](detail::Node& self) {
                   if (double* g = parent_grad(self, 0)) {
                     for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                   }
                   if (double* g = parent_grad(self, 1)) {
                     for (std::size_t o = 0; o < outer; ++o)
                       for (std::size_t c = 0; c < channels; ++c) {
                         const double* row = self.grad.data() + (o * channels + c) * inner;
                         double acc = 0.0;
                         for (std::size_t i = 0; i < inner; ++i) acc += row[i];
                         g[c] += acc;
                       }
                   }
                 });
}

Tensor relu(const Tensor& x) { return leaky_relu(x, 0.0); }

Tensor leaky_relu(const Tensor& x, double slope) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = in[i] > 0.0 ? in[i] : slope * in[i];
  const OpKind kind = slope == 0.0 ? OpKind::Relu : OpKind::LeakyRelu;
  return make_op(x.shape(), std::move(out), kind, {&x}, [slope](detail::Node& self) {
    double* g = parent_grad(self, 0);
    const auto& in = self.parents[0]->data;
    for (std::size_t i = 0; i < self.grad.size(); ++i)
      g[i] += in[i] > 0.0 ? self.grad[i] : slope * self.grad[i];
  });
}

Tensor tanh(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::tanh(in[i]);
  return make_op(x.shape(), std::move(out), OpKind::Tanh, {&x}, [](detail::Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double y = self.data[i];
      g[i] += self.grad[i] * (1.0 - y * y);
    }
  });
}

Tensor abs(const Tensor& x) {
  std::vector<double> out(x.numel());
  auto in = x.data();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = std::fabs(in[i]);
  return make_op(x.shape(), std::move(out), OpKind::Abs, {&x}, [](detail::Node& self) {
    double* g = parent_grad(self, 0);
    const auto& in = self.parents[0]->data;
    for (std::size_t i = 0; i < self.grad.size(); ++i) {
      const double s = in[i] > 0.0 ? 1.0 : (in[i] < 0.0 ? -1.0 : 0.0);
      g[i] += s * self.grad[i];
    }
  });
}

// ---- reductions ----

Tensor sum(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  return make_op({}, {acc}, OpKind::Sum, {&x}, [](detail::Node& self) {
    double* g = parent_grad(self, 0);
    const double up = self.grad[0];
    const std::size_t n = self.parents[0]->data.size();
    for (std::size_t i = 0; i < n; ++i) g[i] += up;
  });
}

Tensor mean(const Tensor& x) {
  if (x.numel() == 0) throw ContractError("mean of an empty tensor");
  double acc = 0.0;
  for (double v : x.data()) acc += v;
  const double n = static_cast<double>(x.numel());
  return make_op({}, {acc / n}, OpKind::Mean, {&x}, [n](detail::Node& self) {
    double* g = parent_grad(self, 0);
    const double up = self.grad[0] / n;
    const std::size_t count = self.parents[0]->data.size();
    for (std::size_t i = 0; i < count; ++i) g[i] += up;
  });
}

Tensor l2_norm(const Tensor& x) {
  double acc = 0.0;
  for (double v : x.data()) acc += v * v;
  const double norm = std::sqrt(acc);
  return make_op({}, {norm}, OpKind::L2Norm, {&x}, [](detail::Node& self) {
    double* g = parent_grad(self, 0);
    const double norm = self.data[0];
    if (norm == 0.0) return;
    const auto& in = self.parents[0]->data;
    const double up = self.grad[0] / norm;
    for (std::size_t i = 0; i < in.size(); ++i) g[i] += up * in[i];
  });
}

Tensor sum_squares(const Tensor& x) { return sum(mul(x, x)); }

// ---- shape ----

Tensor reshape(const Tensor& x, Shape shape) {
  if (shape_numel(shape) != x.numel()) {
    throw DimensionError("reshape " + shape_str(x.shape()) + " -> " + shape_str(shape));
  }
  std::vector<double> out(x.data().begin(), x.data().end());
  return make_op(std::move(shape), std::move(out), OpKind::Reshape, {&x},
                 [](detail::Node& self) {
                   double* g = parent_grad(self, 0);
                   for (std::size_t i = 0; i < self.grad.size(); ++i) g[i] += self.grad[i];
                 });
}

namespace {

struct AxisSplit {
  std::size_t outer, extent, inner;
};

AxisSplit split_at(const Shape& shape, std::size_t axis) {
  AxisSplit s{1, shape[axis], 1};
  for (std::size_t i = 0; i < axis; ++i) s.outer *= shape[i];
  for (std::size_t i = axis + 1; i < shape.size(); ++i) s.inner *= shape[i];
  return s;
}

}  // namespace

Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end) {
  if (axis >= x.rank() || begin >= end || end > x.dim(axis)) {
    throw DimensionError("slice [" + std::to_string(begin) + "," + std::to_string(end) +
                         ") on axis " + std::to_string(axis) + " of " + shape_str(x.shape()));
  }
  const AxisSplit s = split_at(x.shape(), axis);
  const std::size_t len = end - begin;
  Shape shape = x.shape();
  shape[axis] = len;
  std::vector<double> out(s.outer * len * s.inner);
  auto in = x.data();
  for (std::size_t o = 0; o < s.outer; ++o)
    std::copy_n(in.data() + (o * s.extent + begin) * s.inner, len * s.inner,
                out.data() + o * len * s.inner);
  return make_op(std::move(shape), std::move(out), OpKind::Slice, {&x},
                 [s, begin, len](detail::Node& self) {
                   double* g = parent_grad(self, 0);
                   for (std::size_t o = 0; o < s.outer; ++o) {
                     const double* src = self.grad.data() + o * len * s.inner;
                     double* dst = g + (o * s.extent + begin) * s.inner;
                     for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
                   }
                 });
}

Tensor concat(const std::vector<Tensor>& parts, std::size_t axis) {
  if (parts.empty()) throw ContractError("concat of zero tensors");
  Shape shape = parts.front().shape();
  if (axis >= shape.size()) throw DimensionError("concat axis out of range");
  std::size_t total = 0;
  std::vector<std::size_t> extents;
  for (const Tensor& p : parts) {
    Shape a = p.shape(), b = shape;
    if (a.size() != b.size()) throw DimensionError("concat rank mismatch");
    a[axis] = b[axis] = 0;
    if (a != b) {
      throw DimensionError("concat shape mismatch: " + shape_str(p.shape()) + " vs " +
                           shape_str(shape));
    }
    extents.push_back(p.dim(axis));
    total += p.dim(axis);
  }
  shape[axis] = total;
  const AxisSplit s = split_at(shape, axis);
  std::vector<double> out(shape_numel(shape));
  std::size_t offset = 0;
  for (std::size_t k = 0; k < parts.size(); ++k) {
    auto in = parts[k].data();
    const std::size_t len = extents[k];
    for (std::size_t o = 0; o < s.outer; ++o)
      std::copy_n(in.data() + o * len * s.inner, len * s.inner,
                  out.data() + (o * total + offset) * s.inner);
    offset += len;
  }
  return make_op(std::move(shape), std::move(out), OpKind::Concat, parts,
                 [s, extents, total](detail::Node& self) {
                   std::size_t offset = 0;
                   for (std::size_t k = 0; k < extents.size(); ++k) {
                     const std::size_t len = extents[k];
                     if (double* g = parent_grad(self, k)) {
                       for (std::size_t o = 0; o < s.outer; ++o) {
                         const double* src =
                             self.grad.data() + (o * total + offset) * s.inner;
                         double* dst = g + o * len * s.inner;
                         for (std::size_t i = 0; i < len * s.inner; ++i) dst[i] += src[i];
                       }
                     }
                     offset += len;
                   }
                 });
}

// ---- linear algebra ----

Tensor matmul(const Tensor& a, const Tensor& b) {
  if (a.rank() != 2 || b.rank() != 2 || a.dim(1) != b.dim(0)) {
    throw DimensionError("matmul " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
  }
  const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
  std::vector<double> out(m * n);
  detail::gemm_nn(m, n, k, a.data().data(), b.data().data(), out.data(), false);
  return make_op({m, n}, std::move(out), OpKind::MatMul, {&a, &b},
                 [m, k, n](detail::Node& self) {
                   if (double* g = parent_grad(self, 0)) {
                     // dA = dC * B^T
                     detail::gemm_nt(m, k, n, self.grad.data(),
                                     self.parents[1]->data.data(), g, true);
                   }
                   if (double* g = parent_grad(self, 1)) {
                     // dB = A^T * dC
                     detail::gemm_tn(k, n, m, self.parents[0]->data.data(),
                                     self.grad.data(), g, true);
                   }
                 });
}

Tensor transpose(const Tensor& x) {
  if (x.rank() != 2) throw DimensionError("transpose expects rank 2, got " + shape_str(x.shape()));
  const std::size_t m = x.dim(0), n = x.dim(1);
  std::vector<double> out(m * n);
  auto in = x.data();
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < n; ++j) out[j * m + i] = in[i * n + j];
  return make_op({n, m}, std::move(out), OpKind::Transpose, {&x}, [m, n](detail::Node& self) {
    double* g = parent_grad(self, 0);
    for (std::size_t i = 0; i < m; ++i)
      for (std::size_t j = 0; j < n; ++j) g[i * n + j] += self.grad[j * m + i];
  });
}

}  // namespace scg
