#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "scg/adam.hpp"
#include "scg/binary_io.hpp"
#include "scg/checkpoint.hpp"
#include "scg/error.hpp"
#include "scg/gradcheck.hpp"
#include "scg/tensor.hpp"
#include "test_util.hpp"

using namespace scg;
using scg::testing::max_abs_diff;
using scg::testing::naive_conv;
using scg::testing::seeded_randn;

TEST_CASE("conv2d hand examples") {
  const Tensor ones = Tensor::full({1, 1, 3, 3}, 1.0);
  const Tensor two = Tensor::full({1, 1, 1, 1}, 2.0);
  const Tensor y = conv2d(ones, two, 1, 0);
  CHECK(y.shape() == Shape{1, 1, 3, 3});
  for (double v : y.data()) CHECK(v == 2.0);

  const Tensor x = Tensor::from_data({1, 1, 2, 2}, {1, 2, 3, 4});
  const Tensor eye = Tensor::from_data({1, 1, 2, 2}, {1, 0, 0, 1});
  const Tensor z = conv2d(x, eye, 1, 0);
  CHECK(z.shape() == Shape{1, 1, 1, 1});
  CHECK(z.item() == 5.0);
}

TEST_CASE("conv2d matches the naive loop oracle") {
  const Tensor x = seeded_randn({2, 3, 8, 8}, 1);
  const Tensor k = seeded_randn({4, 3, 3, 3}, 2);
  const Tensor y = conv2d(x, k, 1, 0);
  CHECK(max_abs_diff(y.data(), naive_conv(x, k, 1, 0)) < 1e-10);

  // Property sweep over shapes up to (2,4,12,12) with strides and padding.
  std::mt19937_64 gen(7);
  for (int trial = 0; trial < 60; ++trial) {
    const std::size_t b = 1 + gen() % 2, c = 1 + gen() % 4, h = 3 + gen() % 10, w = 3 + gen() % 10;
    const std::size_t o = 1 + gen() % 4, ks = 1 + gen() % 3, stride = 1 + gen() % 2,
                      pad = gen() % 2;
    const Tensor in = seeded_randn({b, c, h, w}, 100 + trial);
    const Tensor kern = seeded_randn({o, c, ks, ks}, 200 + trial);
    const auto oracle = naive_conv(in, kern, stride, pad);
    CHECK(max_abs_diff(conv2d(in, kern, stride, pad).data(), oracle) < 1e-10);
    CHECK(max_abs_diff(conv2d(in, kern, stride, pad, ConvAlgo::Direct).data(), oracle) < 1e-10);
  }
}

TEST_CASE("conv2d rejects channel mismatch and oversized kernels") {
  const Tensor x = Tensor::zeros({1, 3, 4, 4});
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({2, 2, 3, 3}), 1, 0), DimensionError);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({2, 3, 7, 7}), 1, 1), DimensionError);
  CHECK_THROWS_AS(conv2d(x, Tensor::zeros({2, 3, 3, 3}), 0, 0), ContractError);
}

TEST_CASE("backward of simple reductions") {
  Tensor x = seeded_randn({2, 3, 4}, 3, 1.0, true);
  backward(sum(x));
  for (double g : x.grad()) CHECK(g == 1.0);

  Tensor y = seeded_randn({5, 2}, 4, 1.0, true);
  backward(sum(mul(y, y)));
  for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y.grad()[i] == doctest::Approx(2.0 * y.data()[i]));

  // Repeated calls accumulate.
  Tensor z = Tensor::full({3}, 1.0, true);
  const Tensor root = sum(scale(z, 3.0));
  backward(root);
  backward(root);
  for (double g : z.grad()) CHECK(g == 6.0);
}

TEST_CASE("backward contract errors") {
  Tensor x = Tensor::zeros({2, 2}, true);
  CHECK_THROWS_AS(backward(scale(x, 2.0)), ContractError);
  CHECK_THROWS_AS(backward(sum(Tensor::zeros({2}))), ContractError);
}

TEST_CASE("grad_check on sum of squares") {
  const Tensor x = seeded_randn({3, 4}, 5);
  CHECK(grad_check([](const Tensor& t) { return sum_squares(t); }, x) < 1e-8);
}

TEST_CASE("grad_check rejects non-deterministic functions") {
  const Tensor x = seeded_randn({3}, 6);
  auto rng = std::make_shared<Rng>(1);
  auto noisy = [rng](const Tensor& t) {
    return sum(add(t, randn(t.shape(), *rng)));
  };
  CHECK_THROWS_AS(grad_check(noisy, x), ContractError);
}

TEST_CASE("every primitive passes grad_check") {
  // Weighted sums give every output element a distinct upstream gradient.
  auto weighted = [](const Tensor& y, std::uint64_t seed) {
    return sum(mul(y, seeded_randn(y.shape(), seed)));
  };
  const Tensor a = seeded_randn({3, 4}, 10);
  const Tensor b = seeded_randn({3, 4}, 11);
  const Tensor img = seeded_randn({2, 3, 6, 6}, 12);
  const Tensor kern = seeded_randn({2, 3, 3, 3}, 13);
  // Keep away from the kinks of relu / abs.
  Tensor off = a.clone();
  for (double& v : off.mutable_data()) v += v > 0 ? 0.1 : -0.1;

  struct Case {
    const char* name;
    std::function<Tensor(const Tensor&)> f;
    Tensor x;
  };
  const std::vector<Case> cases = {
      {"add", [&](const Tensor& t) { return weighted(add(t, b), 1); }, a},
      {"sub", [&](const Tensor& t) { return weighted(sub(b, t), 2); }, a},
      {"mul", [&](const Tensor& t) { return weighted(mul(t, b), 3); }, a},
      {"scale", [&](const Tensor& t) { return weighted(scale(t, -1.7), 4); }, a},
      {"add_scalar", [&](const Tensor& t) { return weighted(add_scalar(t, 0.3), 5); }, a},
      {"add_bias", [&](const Tensor& t) { return weighted(add_bias(b, slice(reshape(t, {12}), 0, 0, 4)), 6); }, a},
      {"relu", [&](const Tensor& t) { return weighted(relu(t), 7); }, off},
      {"leaky_relu", [&](const Tensor& t) { return weighted(leaky_relu(t, 0.2), 8); }, off},
      {"tanh", [&](const Tensor& t) { return weighted(tanh(t), 9); }, a},
      {"abs", [&](const Tensor& t) { return weighted(abs(t), 10); }, off},
      {"mean", [&](const Tensor& t) { return mean(mul(t, t)); }, a},
      {"l2_norm", [&](const Tensor& t) { return l2_norm(t); }, a},
      {"matmul_lhs", [&](const Tensor& t) { return weighted(matmul(t, transpose(b)), 11); }, a},
      {"matmul_rhs", [&](const Tensor& t) { return weighted(matmul(b, transpose(t)), 12); }, a},
      {"reshape", [&](const Tensor& t) { return weighted(reshape(t, {2, 6}), 13); }, a},
      {"slice", [&](const Tensor& t) { return weighted(slice(t, 1, 1, 3), 14); }, a},
      {"concat", [&](const Tensor& t) { return weighted(concat({t, b, t}, 0), 15); }, a},
      {"conv2d_input", [&](const Tensor& t) { return weighted(conv2d(t, kern, 2, 1), 16); }, img},
      {"conv2d_kernel", [&](const Tensor& t) { return weighted(conv2d(img, t, 1, 1), 17); }, kern},
      {"conv2d_direct", [&](const Tensor& t) { return weighted(conv2d(t, kern, 1, 0, ConvAlgo::Direct), 18); }, img},
      {"avg_pool2d", [&](const Tensor& t) { return weighted(avg_pool2d(t, 3, 2), 19); }, img},
      {"upsample", [&](const Tensor& t) { return weighted(upsample_nearest(t, 2), 20); }, img},
      {"instance_norm", [&](const Tensor& t) { return weighted(instance_norm(t, Tensor(), Tensor()), 21); }, img},
      {"unfold", [&](const Tensor& t) { return weighted(unfold(reshape(t, {6, 6, 6}), 3), 22); }, img},
      {"cross_entropy", [&](const Tensor& t) {
         const std::vector<std::size_t> labels{1, 3, 0};
         return cross_entropy(t, labels);
       }, a},
  };
  for (const auto& c : cases) {
    CAPTURE(c.name);
    CHECK(grad_check(c.f, c.x) <= 1e-4);
  }

  // Instance-norm affine parameters.
  Tensor gamma = seeded_randn({3}, 30, 1.0, true);
  Tensor beta = seeded_randn({3}, 31, 1.0, true);
  Tensor input = img.clone(true);
  const auto checks = grad_check_params(
      [&] { return weighted(instance_norm(input, gamma, beta), 32); },
      {{"gamma", gamma}, {"beta", beta}, {"input", input}});
  for (const auto& c : checks) {
    CAPTURE(c.name);
    CHECK(c.max_rel_error <= 1e-4);
  }
}

TEST_CASE("tape replay is bit-identical") {
  auto run = [] {
    Tensor x = seeded_randn({1, 2, 8, 8}, 40, 1.0, true);
    Tensor k = seeded_randn({3, 2, 3, 3}, 41, 1.0, true);
    const Tensor y = instance_norm(conv2d(x, k, 1, 1), Tensor(), Tensor());
    backward(sum(mul(tanh(y), y)));
    std::vector<double> g(x.grad().begin(), x.grad().end());
    g.insert(g.end(), k.grad().begin(), k.grad().end());
    return g;
  };
  CHECK(run() == run());
}

TEST_CASE("adam first step equals the learning rate") {
  Tensor w = Tensor::from_data({1}, {0.0}, true);
  w.mutable_grad()[0] = 1.0;
  std::vector<NamedTensor> params{{"w", w}};
  AdamState state = make_adam_state(params);
  adam_step(params, AdamOptions{}, state);
  CHECK(w.data()[0] == doctest::Approx(-0.001).epsilon(1e-6));
  CHECK(state.step == 1);
}

TEST_CASE("adam defaults") {
  AdamOptions o;
  CHECK(o.lr == 0.001);
  CHECK(o.beta1 == 0.9);
  CHECK(o.beta2 == 0.999);
}

TEST_CASE("adam trajectory on w^2 matches a hand-rolled reference") {
  // Reference: scalar Adam written out longhand.
  double w_ref = 1.0, m = 0.0, v = 0.0;
  const double lr = 0.1, b1 = 0.9, b2 = 0.999, eps = 1e-8;
  std::vector<double> expected;
  for (int t = 1; t <= 3; ++t) {
    const double g = 2.0 * w_ref;
    m = b1 * m + (1 - b1) * g;
    v = b2 * v + (1 - b2) * g * g;
    const double mh = m / (1 - std::pow(b1, t)), vh = v / (1 - std::pow(b2, t));
    w_ref -= lr * mh / (std::sqrt(vh) + eps);
    expected.push_back(w_ref);
  }

  Tensor w = Tensor::from_data({1}, {1.0}, true);
  Adam opt({{"w", w}}, AdamOptions{lr, b1, b2, eps});
  for (int t = 0; t < 3; ++t) {
    opt.zero_grad();
    backward(sum(mul(w, w)));
    opt.step();
    CHECK(std::fabs(w.data()[0] - expected[t]) < 1e-12);
  }
}

TEST_CASE("adam requires gradients") {
  Tensor w = Tensor::zeros({2}, true);
  Adam opt({{"w", w}}, AdamOptions{});
  CHECK_THROWS_AS(opt.step(), ContractError);
}

TEST_CASE("checkpoint round trip and atomic failure") {
  const auto dir = scg::testing::temp_dir("ckpt");
  Tensor a = Tensor::from_data({2, 3}, {1, 2, 3, 4, 5, 6.5});
  Tensor b = Tensor::from_data({4}, {-1, 0.25, 8, 1e-3});
  Tensor s = Tensor::scalar(7.0);
  const std::vector<NamedTensor> named{{"g_p2s/a", a}, {"d_s/b", b}, {"meta/epoch", s}};
  save_checkpoint(dir / "x.ckpt", named);
  const std::string bytes = read_file(dir / "x.ckpt");
  CHECK(bytes.substr(0, 4) == "SCGT");
  CHECK(encode_checkpoint(read_checkpoint(dir / "x.ckpt")) == bytes);

  Tensor a2 = Tensor::zeros({2, 3}), b2 = Tensor::zeros({4}), s2 = Tensor::zeros({});
  assign_checkpoint(read_checkpoint(dir / "x.ckpt"), {{"g_p2s/a", a2}, {"d_s/b", b2}, {"meta/epoch", s2}});
  CHECK(encode_checkpoint({{"g_p2s/a", a2}, {"d_s/b", b2}, {"meta/epoch", s2}}) == bytes);

  // Shape mismatch: nothing is modified and the offender is named.
  Tensor wrong = Tensor::zeros({3, 2});
  Tensor untouched = Tensor::full({4}, 9.0);
  try {
    assign_checkpoint(read_checkpoint(dir / "x.ckpt"), {{"d_s/b", untouched}, {"g_p2s/a", wrong}});
    FAIL("expected IncompatibleError");
  } catch (const IncompatibleError& e) {
    CHECK(std::string(e.what()).find("g_p2s/a") != std::string::npos);
  }
  for (double v : untouched.data()) CHECK(v == 9.0);

  std::string corrupt = bytes;
  corrupt[0] = 'X';
  write_file_atomic(dir / "bad.ckpt", corrupt);
  CHECK_THROWS_AS(read_checkpoint(dir / "bad.ckpt"), IncompatibleError);
  CHECK_THROWS_AS(decode_checkpoint(bytes.substr(0, bytes.size() - 3)), IoError);
}

TEST_CASE("finite checks flag NaN") {
  const bool before = finite_checks_enabled();
  set_finite_checks(true);
  const Tensor x = Tensor::from_data({2}, {1.0, std::nan("")});
  CHECK_THROWS_AS(scale(x, 2.0), NumericError);
  set_finite_checks(before);
}
