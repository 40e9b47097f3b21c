#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <initializer_list>
#include <memory>
#include <span>
#include <string>
#include <vector>

namespace scg {

using Shape = std::vector<std::size_t>;

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Every node on the tape records which primitive produced it.
enum class OpKind : std::uint8_t {
  Leaf,
  Add,
  Sub,
  Mul,
  Scale,
  AddScalar,
  AddBias,
  Relu,
  LeakyRelu,
  Tanh,
  Abs,
  Sum,
  Mean,
  L2Norm,
  MatMul,
  Transpose,
  Reshape,
  Slice,
  Concat,
  Conv2d,
  AvgPool2d,
  UpsampleNearest,
  InstanceNorm,
  Unfold,
  CrossEntropy,
};

const char* op_name(OpKind op);

namespace detail {

struct Node {
  Shape shape;
  std::vector<double> data;
  std::vector<double> grad;  // empty until a gradient is written
  bool requires_grad = false;
  OpKind op = OpKind::Leaf;
  std::vector<std::shared_ptr<Node>> parents;
  // Reads this node's grad and accumulates into the parents that require it.
  std::function<void(Node&)> backward;

  void ensure_grad();
};

}  // namespace detail

// Dense row-major double tensor with optional participation in a reverse-mode
// tape. Copies share storage: a Tensor is a handle, like a libtorch tensor.
class Tensor {
 public:
  Tensor() = default;

  static Tensor zeros(Shape shape, bool requires_grad = false);
  static Tensor full(Shape shape, double value, bool requires_grad = false);
  static Tensor from_data(Shape shape, std::vector<double> data,
                          bool requires_grad = false);
  static Tensor scalar(double value, bool requires_grad = false);

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const;
  std::size_t rank() const { return shape().size(); }
  std::size_t dim(std::size_t axis) const;
  std::size_t numel() const;

  std::span<const double> data() const;
  // Mutable access is only meant for leaves (parameters, inputs).
  std::span<double> mutable_data();
  double item() const;
  double at(std::initializer_list<std::size_t> index) const;

  bool requires_grad() const;
  void set_requires_grad(bool value);
  bool has_grad() const;
  std::span<const double> grad() const;
  std::span<double> mutable_grad();
  void zero_grad();

  bool is_leaf() const;
  OpKind op() const;

  // Same values, fresh leaf without history.
  Tensor detach() const;
  // Deep copy of the values into a new leaf.
  Tensor clone(bool requires_grad = false) const;

  const std::shared_ptr<detail::Node>& node() const { return node_; }
  explicit Tensor(std::shared_ptr<detail::Node> node) : node_(std::move(node)) {}

 private:
  std::shared_ptr<detail::Node> node_;
};

// Populates grad on every requires_grad leaf reachable from root. Leaf grads
// accumulate across calls; intermediate grads are recomputed each call.
void backward(const Tensor& root);

// NaN/Inf checks on every op output. On by default in debug builds.
void set_finite_checks(bool enabled);
bool finite_checks_enabled();

// ---- elementwise ----
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& x, double factor);
Tensor add_scalar(const Tensor& x, double value);
Tensor neg(const Tensor& x);
// Adds b[C] along axis 1 of x[B, C, ...] (or x[B, C]).
Tensor add_bias(const Tensor& x, const Tensor& bias);
Tensor relu(const Tensor& x);
Tensor leaky_relu(const Tensor& x, double slope);
Tensor tanh(const Tensor& x);
Tensor abs(const Tensor& x);

// ---- reductions ----
Tensor sum(const Tensor& x);
Tensor mean(const Tensor& x);
Tensor l2_norm(const Tensor& x);
Tensor sum_squares(const Tensor& x);

// ---- shape ----
Tensor reshape(const Tensor& x, Shape shape);
Tensor slice(const Tensor& x, std::size_t axis, std::size_t begin, std::size_t end);
Tensor concat(const std::vector<Tensor>& parts, std::size_t axis);

// ---- linear algebra ----
Tensor matmul(const Tensor& a, const Tensor& b);  // [M,K] x [K,N]
Tensor transpose(const Tensor& x);                // [M,N] -> [N,M]

// ---- spatial ----
enum class ConvAlgo { Im2col, Direct };

// input [B,C,H,W], kernel [O,C,k,k] -> [B,O,H',W'], zero padding.
Tensor conv2d(const Tensor& input, const Tensor& kernel, std::size_t stride,
              std::size_t padding, ConvAlgo algo = ConvAlgo::Im2col);
Tensor avg_pool2d(const Tensor& input, std::size_t kernel, std::size_t stride);
Tensor upsample_nearest(const Tensor& input, std::size_t factor);
// Per-(sample, channel) normalization over H x W. gamma/beta may be undefined.
Tensor instance_norm(const Tensor& input, const Tensor& gamma, const Tensor& beta,
                     double eps = 1e-5);
// Dense stride-1 k x k windows of x[C,H,W] -> [m, C*k*k], rows in origin
// order, each row vectorized as (channel, row, col).
Tensor unfold(const Tensor& x, std::size_t k);

struct NamedTensor {
  std::string name;
  Tensor tensor;
};

// Mean negative log-likelihood of labels under softmax(logits[B,K]).
Tensor cross_entropy(const Tensor& logits, std::span<const std::size_t> labels);

}  // namespace scg
