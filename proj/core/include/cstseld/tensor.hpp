#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cstseld/errors.hpp"

namespace cst {

using Shape = std::vector<std::int64_t>;

std::int64_t shape_numel(const Shape& s);
std::string shape_to_string(const Shape& s);

/// One node of the reverse-mode graph. Holds the forward value, the
/// accumulated gradient, the producing op kind and whatever the backward
/// rule needs (captured inside `backward`).
template <typename T>
struct TensorNode {
  Shape shape;
  std::vector<T> value;
  std::vector<T> grad;  // empty until first accumulation
  bool requires_grad = false;
  bool backward_run = false;
  std::string op;  // empty for leaves
  std::vector<std::shared_ptr<TensorNode<T>>> inputs;
  std::function<void(TensorNode<T>&)> backward;

  void ensure_grad() {
    if (grad.empty()) grad.assign(value.size(), T(0));
  }
};

/// Whether newly created ops record backward closures (thread-local).
bool autograd_enabled();
void set_autograd_enabled(bool on);

struct NoGradGuard {
  NoGradGuard() : prev_(autograd_enabled()) { set_autograd_enabled(false); }
  ~NoGradGuard() { set_autograd_enabled(prev_); }
  NoGradGuard(const NoGradGuard&) = delete;
  NoGradGuard& operator=(const NoGradGuard&) = delete;

 private:
  bool prev_;
};

/// Dense row-major N-d tensor handle. Copies are shallow (shared node);
/// use clone() for a deep copy.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<T> data);

  static Tensor full(Shape shape, T v);
  static Tensor scalar(T v);
  static Tensor from_node(std::shared_ptr<TensorNode<T>> n) { return Tensor(std::move(n)); }

  bool defined() const { return node_ != nullptr; }
  const Shape& shape() const { return node_->shape; }
  std::int64_t dim(int i) const { return node_->shape[static_cast<std::size_t>(i)]; }
  int rank() const { return static_cast<int>(node_->shape.size()); }
  std::int64_t numel() const { return static_cast<std::int64_t>(node_->value.size()); }

  const std::vector<T>& values() const { return node_->value; }
  std::vector<T>& mutable_values() { return node_->value; }
  const T* data() const { return node_->value.data(); }
  T* data() { return node_->value.data(); }
  T item() const;

  bool requires_grad() const { return node_->requires_grad; }
  Tensor& set_requires_grad(bool on = true);
  bool has_grad() const { return !node_->grad.empty(); }
  const std::vector<T>& grad() const;
  void zero_grad();

  Tensor clone() const;
  /// Value copy detached from the graph (never requires grad).
  Tensor detach() const;

  /// Reverse-mode sweep from a scalar. Populates grad on every
  /// requires_grad leaf reachable from this node. Running it twice on the
  /// same graph is a usage error.
  void backward();

  std::shared_ptr<TensorNode<T>> node() const { return node_; }

 private:
  explicit Tensor(std::shared_ptr<TensorNode<T>> n) : node_(std::move(n)) {}
  std::shared_ptr<TensorNode<T>> node_;
};

/// Throws NumericError if any element is NaN/Inf. Every op applies this to
/// its output; it is public so feature/inference code can reuse it.
template <typename T>
void check_finite(const std::vector<T>& v, const char* op);

// ---- elementwise arithmetic -------------------------------------------

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T s);
template <typename T> Tensor<T> add_scalar(const Tensor<T>& a, T s);

template <typename T> Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T> Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T> Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

// ---- reductions --------------------------------------------------------

template <typename T> Tensor<T> sum(const Tensor<T>& a);
template <typename T> Tensor<T> mean(const Tensor<T>& a);

// ---- shape ops ---------------------------------------------------------

template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);
template <typename T> Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& perm);
template <typename T> Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis);

// ---- attention / output math ------------------------------------------

/// matmul over the last two axes. Supports [m,k]x[k,n], batched
/// [B,m,k]x[B,k,n] and [B,m,k]x[k,n] (shared right operand). Transpose
/// flags apply to the logical matrices.
template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a = false,
                 bool transpose_b = false);

/// Numerically stabilized softmax along the last axis.
template <typename T> Tensor<T> softmax_last(const Tensor<T>& a);

// ---- value-level utilities (not differentiated) ------------------------

template <typename T> Tensor<T> median_axis(const Tensor<T>& a, int axis);
template <typename T> Tensor<T> norm_axis(const Tensor<T>& a, int axis);

}  // namespace cst
