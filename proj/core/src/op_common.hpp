// Private helpers shared by the op implementation files. Not installed.
#pragma once

#include <functional>
#include <memory>
#include <utility>
#include <vector>

#include "cstseld/tensor.hpp"

namespace cst::detail {

inline std::vector<std::int64_t> row_major_strides(const Shape& s) {
  std::vector<std::int64_t> st(s.size());
  std::int64_t acc = 1;
  for (int i = static_cast<int>(s.size()) - 1; i >= 0; --i) {
    st[static_cast<std::size_t>(i)] = acc;
    acc *= s[static_cast<std::size_t>(i)];
  }
  return st;
}

inline void validate_shape(const Shape& s) {
  for (auto d : s) {
    if (d <= 0)
      throw ConfigError("tensor extent must be positive, got shape " + shape_to_string(s));
  }
}

// Builds the output node of an op; records inputs and the backward rule
// only when autograd is on and some input needs gradients.
template <typename T>
Tensor<T> make_op(const char* op, Shape shape, std::vector<T> value,
                  std::vector<std::shared_ptr<TensorNode<T>>> inputs,
                  std::function<void(TensorNode<T>&)> backward) {
  check_finite(value, op);
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = std::move(shape);
  n->value = std::move(value);
  bool needs = false;
  if (autograd_enabled()) {
    for (const auto& in : inputs)
      if (in->requires_grad) needs = true;
  }
  if (needs) {
    n->requires_grad = true;
    n->op = op;
    n->inputs = std::move(inputs);
    n->backward = std::move(backward);
  }
  return Tensor<T>::from_node(std::move(n));
}

template <typename T>
void accumulate(TensorNode<T>& node, const std::vector<T>& delta) {
  node.ensure_grad();
  for (std::size_t i = 0; i < delta.size(); ++i) node.grad[i] += delta[i];
}

}  // namespace cst::detail
