#pragma once

#include <functional>
#include <initializer_list>
#include <span>
#include <vector>

#include "scg/tensor.hpp"

namespace scg::detail {

using BackwardFn = std::function<void(Node&)>;

void check_finite(std::span<const double> values, OpKind op);

Tensor make_op(Shape shape, std::vector<double> data, OpKind op,
               std::initializer_list<const Tensor*> inputs, BackwardFn fn);
Tensor make_op(Shape shape, std::vector<double> data, OpKind op,
               const std::vector<Tensor>& inputs, BackwardFn fn);

// Gradient buffer of parent i, or nullptr if that parent is not on the tape.
double* parent_grad(Node& self, std::size_t i);

void require_same_shape(const Tensor& a, const Tensor& b, const char* what);

}  // namespace scg::detail
