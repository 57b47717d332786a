#include "cstseld/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <unordered_set>

#include "op_common.hpp"

namespace cst {

std::int64_t shape_numel(const Shape& s) {
  std::int64_t n = 1;
  for (auto d : s) n *= d;
  return n;
}

std::string shape_to_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += ",";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

namespace {

thread_local bool g_autograd_enabled = true;

template <typename T>
std::shared_ptr<TensorNode<T>> make_leaf(Shape shape, std::vector<T> data) {
  detail::validate_shape(shape);
  if (shape_numel(shape) != static_cast<std::int64_t>(data.size()))
    throw ConfigError("tensor data length " + std::to_string(data.size()) +
                      " does not match shape " + shape_to_string(shape));
  auto n = std::make_shared<TensorNode<T>>();
  n->shape = std::move(shape);
  n->value = std::move(data);
  return n;
}

}  // namespace

using detail::accumulate;
using detail::make_op;

bool autograd_enabled() { return g_autograd_enabled; }
void set_autograd_enabled(bool on) { g_autograd_enabled = on; }

template <typename T>
void check_finite(const std::vector<T>& v, const char* op) {
  for (const T& x : v) {
    if (!std::isfinite(x))
      throw NumericError(std::string("non-finite value produced by op '") + op + "'");
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape) {
  auto n = shape_numel(shape);
  node_ = make_leaf<T>(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), T(0)));
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) {
  node_ = make_leaf<T>(std::move(shape), std::move(data));
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T v) {
  auto n = shape_numel(shape);
  return Tensor(std::move(shape), std::vector<T>(static_cast<std::size_t>(n), v));
}

template <typename T>
Tensor<T> Tensor<T>::scalar(T v) {
  return Tensor(Shape{1}, std::vector<T>{v});
}

template <typename T>
T Tensor<T>::item() const {
  if (numel() != 1) throw ConfigError("item() requires a scalar tensor, got " + shape_to_string(shape()));
  return node_->value[0];
}

template <typename T>
Tensor<T>& Tensor<T>::set_requires_grad(bool on) {
  if (!node_->op.empty()) throw std::logic_error("requires_grad can only be toggled on leaf tensors");
  node_->requires_grad = on;
  return *this;
}

template <typename T>
const std::vector<T>& Tensor<T>::grad() const {
  if (node_->grad.empty()) throw std::logic_error("tensor has no gradient (run backward first)");
  return node_->grad;
}

template <typename T>
void Tensor<T>::zero_grad() {
  node_->grad.clear();
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  auto n = make_leaf<T>(node_->shape, node_->value);
  n->requires_grad = node_->requires_grad;
  return Tensor(std::move(n));
}

template <typename T>
Tensor<T> Tensor<T>::detach() const {
  return Tensor(make_leaf<T>(node_->shape, node_->value));
}

template <typename T>
void Tensor<T>::backward() {
  if (numel() != 1) throw std::logic_error("backward() requires a scalar loss, got " + shape_to_string(shape()));
  if (!node_->requires_grad)
    throw std::logic_error("backward() on a tensor that does not require gradients");
  if (node_->backward_run)
    throw std::logic_error("backward() already run on this graph; rebuild it before differentiating again");

  // Topological order by iterative DFS over recorded inputs.
  std::vector<TensorNode<T>*> order;
  std::unordered_set<TensorNode<T>*> seen;
  struct Frame {
    TensorNode<T>* n;
    std::size_t next = 0;
  };
  std::vector<Frame> stack{{node_.get()}};
  seen.insert(node_.get());
  while (!stack.empty()) {
    Frame& f = stack.back();
    if (f.next < f.n->inputs.size()) {
      TensorNode<T>* in = f.n->inputs[f.next++].get();
      if (in->requires_grad && !seen.count(in)) {
        seen.insert(in);
        stack.push_back({in});
      }
    } else {
      order.push_back(f.n);
      stack.pop_back();
    }
  }

  node_->ensure_grad();
  node_->grad[0] = T(1);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    TensorNode<T>* n = *it;
    if (n->backward) {
      n->ensure_grad();
      n->backward(*n);
    }
  }
  node_->backward_run = true;
}

// ---- elementwise arithmetic -------------------------------------------

namespace {

template <typename T>
void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (a.shape() != b.shape())
    throw ConfigError(std::string(op) + ": shape mismatch " + shape_to_string(a.shape()) + " vs " +
                      shape_to_string(b.shape()));
}

}  // namespace

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  std::vector<T> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] += bv[i];
  return make_op<T>(
      "add", a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode<T>& n) {
        for (auto& in : n.inputs)
          if (in->requires_grad) accumulate(*in, n.grad);
      });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  std::vector<T> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] -= bv[i];
  return make_op<T>(
      "sub", a.shape(), std::move(out), {a.node(), b.node()}, [](TensorNode<T>& n) {
        auto& ia = *n.inputs[0];
        auto& ib = *n.inputs[1];
        if (ia.requires_grad) accumulate(ia, n.grad);
        if (ib.requires_grad) {
          ib.ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i) ib.grad[i] -= n.grad[i];
        }
      });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "mul");
  std::vector<T> out(a.values());
  const auto& bv = b.values();
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= bv[i];
  // Saved operand values keep the graph correct even if a leaf is later
  // mutated in place (e.g. by an optimizer step).
  std::vector<T> av = a.values();
  std::vector<T> bvc = b.values();
  return make_op<T>(
      "mul", a.shape(), std::move(out), {a.node(), b.node()},
      [av = std::move(av), bvc = std::move(bvc)](TensorNode<T>& n) {
        auto& ia = *n.inputs[0];
        auto& ib = *n.inputs[1];
        if (ia.requires_grad) {
          ia.ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i) ia.grad[i] += n.grad[i] * bvc[i];
        }
        if (ib.requires_grad) {
          ib.ensure_grad();
          for (std::size_t i = 0; i < n.grad.size(); ++i) ib.grad[i] += n.grad[i] * av[i];
        }
      });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T s) {
  std::vector<T> out(a.values());
  for (auto& x : out) x *= s;
  return make_op<T>("scale", a.shape(), std::move(out), {a.node()}, [s](TensorNode<T>& n) {
    auto& in = *n.inputs[0];
    in.ensure_grad();
    for (std::size_t i = 0; i < n.grad.size(); ++i) in.grad[i] += n.grad[i] * s;
  });
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T s) {
  std::vector<T> out(a.values());
  for (auto& x : out) x += s;
  return make_op<T>("add_scalar", a.shape(), std::move(out), {a.node()},
                    [](TensorNode<T>& n) { accumulate(*n.inputs[0], n.grad); });
}

// ---- reductions --------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
  T acc = T(0);
  for (const T& x : a.values()) acc += x;
  return make_op<T>("sum", Shape{1}, std::vector<T>{acc}, {a.node()}, [](TensorNode<T>& n) {
    auto& in = *n.inputs[0];
    in.ensure_grad();
    const T g = n.grad[0];
    for (auto& x : in.grad) x += g;
  });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
  return scale(sum(a), T(1) / static_cast<T>(a.numel()));
}

// ---- shape ops ---------------------------------------------------------

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
  detail::validate_shape(shape);
  if (shape_numel(shape) != a.numel())
    throw ConfigError("reshape: cannot view " + shape_to_string(a.shape()) + " as " +
                      shape_to_string(shape));
  std::vector<T> out(a.values());
  return make_op<T>("reshape", std::move(shape), std::move(out), {a.node()},
                    [](TensorNode<T>& n) { accumulate(*n.inputs[0], n.grad); });
}

namespace {

// out[i0,i1,...] = in[perm applied]; returns the gather table so the
// backward pass can scatter along the same mapping.
template <typename T>
std::vector<T> permute_values(const std::vector<T>& in, const Shape& in_shape,
                              const std::vector<int>& perm, Shape& out_shape,
                              std::vector<std::int64_t>& gather) {
  const auto rank = in_shape.size();
  out_shape.resize(rank);
  for (std::size_t i = 0; i < rank; ++i) out_shape[i] = in_shape[static_cast<std::size_t>(perm[i])];
  auto in_strides = detail::row_major_strides(in_shape);
  std::vector<std::int64_t> out_to_in(rank);
  for (std::size_t i = 0; i < rank; ++i) out_to_in[i] = in_strides[static_cast<std::size_t>(perm[i])];

  const std::int64_t n = shape_numel(in_shape);
  std::vector<T> out(static_cast<std::size_t>(n));
  gather.resize(static_cast<std::size_t>(n));
  std::vector<std::int64_t> idx(rank, 0);
  std::int64_t src = 0;
  for (std::int64_t o = 0; o < n; ++o) {
    gather[static_cast<std::size_t>(o)] = src;
    out[static_cast<std::size_t>(o)] = in[static_cast<std::size_t>(src)];
    // advance mixed-radix counter over the output shape
    for (int ax = static_cast<int>(rank) - 1; ax >= 0; --ax) {
      auto uax = static_cast<std::size_t>(ax);
      idx[uax]++;
      src += out_to_in[uax];
      if (idx[uax] < out_shape[uax]) break;
      src -= out_to_in[uax] * out_shape[uax];
      idx[uax] = 0;
    }
  }
  return out;
}

}  // namespace

template <typename T>
Tensor<T> permute(const Tensor<T>& a, const std::vector<int>& perm) {
  const auto rank = a.shape().size();
  if (perm.size() != rank) throw ConfigError("permute: axis list length does not match tensor rank");
  std::vector<bool> used(rank, false);
  for (int p : perm) {
    if (p < 0 || static_cast<std::size_t>(p) >= rank || used[static_cast<std::size_t>(p)])
      throw ConfigError("permute: invalid axis permutation");
    used[static_cast<std::size_t>(p)] = true;
  }
  Shape out_shape;
  std::vector<std::int64_t> gather;
  auto out = permute_values(a.values(), a.shape(), perm, out_shape, gather);
  return make_op<T>("permute", std::move(out_shape), std::move(out), {a.node()},
                    [gather = std::move(gather)](TensorNode<T>& n) {
                      auto& in = *n.inputs[0];
                      in.ensure_grad();
                      for (std::size_t o = 0; o < n.grad.size(); ++o)
                        in.grad[static_cast<std::size_t>(gather[o])] += n.grad[o];
                    });
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& parts, int axis) {
  if (parts.empty()) throw ConfigError("concat: no inputs");
  const Shape& first = parts[0].shape();
  const auto rank = first.size();
  if (axis < 0 || static_cast<std::size_t>(axis) >= rank) throw ConfigError("concat: axis out of range");
  Shape out_shape = first;
  std::int64_t axis_total = 0;
  for (const auto& p : parts) {
    if (p.shape().size() != rank) throw ConfigError("concat: rank mismatch");
    for (std::size_t i = 0; i < rank; ++i) {
      if (i != static_cast<std::size_t>(axis) && p.shape()[i] != first[i])
        throw ConfigError("concat: extent mismatch outside the concat axis");
    }
    axis_total += p.shape()[static_cast<std::size_t>(axis)];
  }
  out_shape[static_cast<std::size_t>(axis)] = axis_total;

  std::int64_t outer = 1;
  for (std::size_t i = 0; i < static_cast<std::size_t>(axis); ++i) outer *= first[i];
  std::int64_t inner = 1;
  for (std::size_t i = static_cast<std::size_t>(axis) + 1; i < rank; ++i) inner *= first[i];

  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)));
  std::vector<std::int64_t> part_rows(parts.size());
  std::vector<std::shared_ptr<TensorNode<T>>> inputs;
  inputs.reserve(parts.size());
  const std::int64_t out_row = axis_total * inner;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& p = parts[pi];
    part_rows[pi] = p.shape()[static_cast<std::size_t>(axis)] * inner;
    inputs.push_back(p.node());
  }
  std::int64_t offset = 0;
  for (std::size_t pi = 0; pi < parts.size(); ++pi) {
    const auto& pv = parts[pi].values();
    for (std::int64_t r = 0; r < outer; ++r) {
      std::memcpy(out.data() + r * out_row + offset, pv.data() + r * part_rows[pi],
                  static_cast<std::size_t>(part_rows[pi]) * sizeof(T));
    }
    offset += part_rows[pi];
  }

  return make_op<T>("concat", std::move(out_shape), std::move(out), std::move(inputs),
                    [outer, out_row, part_rows](TensorNode<T>& n) {
                      std::int64_t off = 0;
                      for (std::size_t pi = 0; pi < n.inputs.size(); ++pi) {
                        auto& in = *n.inputs[pi];
                        if (in.requires_grad) {
                          in.ensure_grad();
                          for (std::int64_t r = 0; r < outer; ++r) {
                            const T* src = n.grad.data() + r * out_row + off;
                            T* dst = in.grad.data() + r * part_rows[pi];
                            for (std::int64_t i = 0; i < part_rows[pi]; ++i) dst[i] += src[i];
                          }
                        }
                        off += part_rows[pi];
                      }
                    });
}

// ---- matmul ------------------------------------------------------------

namespace {

// C(m x n) += A'(m x k) * B'(k x n) where A' is `a` read transposed when
// ta is set (physical k x m), likewise B'.
template <typename T>
void gemm_acc(const T* a, bool ta, const T* b, bool tb, T* c, std::int64_t m, std::int64_t k,
              std::int64_t n) {
  for (std::int64_t i = 0; i < m; ++i) {
    T* crow = c + i * n;
    for (std::int64_t p = 0; p < k; ++p) {
      const T av = ta ? a[p * m + i] : a[i * k + p];
      if (av == T(0)) continue;
      if (!tb) {
        const T* brow = b + p * n;
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * brow[j];
      } else {
        for (std::int64_t j = 0; j < n; ++j) crow[j] += av * b[j * k + p];
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b, bool transpose_a, bool transpose_b) {
  const int ra = a.rank();
  const int rb = b.rank();
  if ((ra != 2 && ra != 3) || (rb != 2 && rb != 3) || (ra == 2 && rb == 3))
    throw ConfigError("matmul: unsupported ranks " + shape_to_string(a.shape()) + " x " +
                      shape_to_string(b.shape()));

  const std::int64_t batch = (ra == 3) ? a.dim(0) : 1;
  const std::int64_t am = transpose_a ? a.dim(ra - 1) : a.dim(ra - 2);
  const std::int64_t ak = transpose_a ? a.dim(ra - 2) : a.dim(ra - 1);
  const std::int64_t bk = transpose_b ? b.dim(rb - 1) : b.dim(rb - 2);
  const std::int64_t bn = transpose_b ? b.dim(rb - 2) : b.dim(rb - 1);
  if (ak != bk)
    throw ConfigError("matmul: inner extent mismatch " + shape_to_string(a.shape()) + " x " +
                      shape_to_string(b.shape()));
  if (ra == 3 && rb == 3 && b.dim(0) != batch) throw ConfigError("matmul: batch extent mismatch");

  Shape out_shape = (ra == 3) ? Shape{batch, am, bn} : Shape{am, bn};
  std::vector<T> out(static_cast<std::size_t>(shape_numel(out_shape)), T(0));
  const std::int64_t a_sz = am * ak;
  const std::int64_t b_sz = ak * bn;
  const std::int64_t c_sz = am * bn;
  const bool b_shared = (rb == 2);
  const std::vector<T> av = a.values();
  const std::vector<T> bv = b.values();
  for (std::int64_t bi = 0; bi < batch; ++bi) {
    gemm_acc(av.data() + bi * a_sz, transpose_a, bv.data() + (b_shared ? 0 : bi * b_sz), transpose_b,
             out.data() + bi * c_sz, am, ak, bn);
  }

  auto backward = [=](TensorNode<T>& n) {
    auto& ia = *n.inputs[0];
    auto& ib = *n.inputs[1];
    for (std::int64_t bi = 0; bi < batch; ++bi) {
      const T* dy = n.grad.data() + bi * c_sz;
      const T* ap = av.data() + bi * a_sz;
      const T* bp = bv.data() + (b_shared ? 0 : bi * b_sz);
      if (ia.requires_grad) {
        ia.ensure_grad();
        T* da = ia.grad.data() + bi * a_sz;
        // dA' = dY * B'^T; scatter transposed when A is stored transposed
        if (!transpose_a) {
          gemm_acc(dy, false, bp, !transpose_b, da, am, bn, ak);
        } else {
          // dA (physical k x m) = B' * dY^T
          gemm_acc(bp, transpose_b, dy, true, da, ak, bn, am);
        }
      }
      if (ib.requires_grad) {
        ib.ensure_grad();
        T* db = ib.grad.data() + (b_shared ? 0 : bi * b_sz);
        if (!transpose_b) {
          // dB' (k x n) = A'^T * dY
          gemm_acc(ap, !transpose_a, dy, false, db, ak, am, bn);
        } else {
          // dB (physical n x k) = dY^T * A'
          gemm_acc(dy, true, ap, transpose_a, db, bn, am, ak);
        }
      }
    }
  };
  return make_op<T>("matmul", std::move(out_shape), std::move(out), {a.node(), b.node()},
                    std::move(backward));
}

// ---- softmax -----------------------------------------------------------

template <typename T>
Tensor<T> softmax_last(const Tensor<T>& a) {
  if (a.rank() < 1) throw ConfigError("softmax_last: tensor must have at least one axis");
  const std::int64_t cols = a.dim(a.rank() - 1);
  const std::int64_t rows = a.numel() / cols;
  std::vector<T> out(a.values().size());
  const auto& in = a.values();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* x = in.data() + r * cols;
    T* y = out.data() + r * cols;
    T mx = x[0];
    for (std::int64_t j = 1; j < cols; ++j) mx = std::max(mx, x[j]);
    T denom = T(0);
    for (std::int64_t j = 0; j < cols; ++j) {
      y[j] = std::exp(x[j] - mx);
      denom += y[j];
    }
    for (std::int64_t j = 0; j < cols; ++j) y[j] /= denom;
  }
  std::vector<T> saved = out;
  return make_op<T>("softmax_last", a.shape(), std::move(out), {a.node()},
                    [rows, cols, saved = std::move(saved)](TensorNode<T>& n) {
                      auto& in = *n.inputs[0];
                      in.ensure_grad();
                      for (std::int64_t r = 0; r < rows; ++r) {
                        const T* y = saved.data() + r * cols;
                        const T* dy = n.grad.data() + r * cols;
                        T dot = T(0);
                        for (std::int64_t j = 0; j < cols; ++j) dot += dy[j] * y[j];
                        T* dx = in.grad.data() + r * cols;
                        for (std::int64_t j = 0; j < cols; ++j) dx[j] += y[j] * (dy[j] - dot);
                      }
                    });
}

// ---- value-level utilities ----------------------------------------------

namespace {

template <typename T, typename Reduce>
Tensor<T> reduce_axis_values(const Tensor<T>& a, int axis, const char* op, Reduce fn) {
  const int rank = a.rank();
  if (axis < 0 || axis >= rank) throw ConfigError(std::string(op) + ": axis out of range");
  const Shape& s = a.shape();
  Shape out_shape;
  for (int i = 0; i < rank; ++i)
    if (i != axis) out_shape.push_back(s[static_cast<std::size_t>(i)]);
  if (out_shape.empty()) out_shape.push_back(1);

  std::int64_t outer = 1, inner = 1;
  for (int i = 0; i < axis; ++i) outer *= s[static_cast<std::size_t>(i)];
  for (int i = axis + 1; i < rank; ++i) inner *= s[static_cast<std::size_t>(i)];
  const std::int64_t extent = s[static_cast<std::size_t>(axis)];

  std::vector<T> out(static_cast<std::size_t>(outer * inner));
  std::vector<T> lane(static_cast<std::size_t>(extent));
  const auto& in = a.values();
  for (std::int64_t o = 0; o < outer; ++o) {
    for (std::int64_t i = 0; i < inner; ++i) {
      for (std::int64_t e = 0; e < extent; ++e)
        lane[static_cast<std::size_t>(e)] = in[static_cast<std::size_t>((o * extent + e) * inner + i)];
      out[static_cast<std::size_t>(o * inner + i)] = fn(lane);
    }
  }
  return Tensor<T>(std::move(out_shape), std::move(out));
}

}  // namespace

template <typename T>
Tensor<T> median_axis(const Tensor<T>& a, int axis) {
  return reduce_axis_values(a, axis, "median_axis", [](std::vector<T>& lane) {
    std::vector<T> tmp = lane;
    const std::size_t n = tmp.size();
    std::nth_element(tmp.begin(), tmp.begin() + n / 2, tmp.end());
    T hi = tmp[n / 2];
    if (n % 2 == 1) return hi;
    std::nth_element(tmp.begin(), tmp.begin() + n / 2 - 1, tmp.end());
    return (tmp[n / 2 - 1] + hi) / T(2);
  });
}

template <typename T>
Tensor<T> norm_axis(const Tensor<T>& a, int axis) {
  return reduce_axis_values(a, axis, "norm_axis", [](std::vector<T>& lane) {
    T acc = T(0);
    for (T x : lane) acc += x * x;
    return std::sqrt(acc);
  });
}

// ---- explicit instantiations --------------------------------------------

#define CST_INSTANTIATE_TENSOR(T)                                                              \
  template struct TensorNode<T>;                                                               \
  template class Tensor<T>;                                                                    \
  template void check_finite<T>(const std::vector<T>&, const char*);                           \
  template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                               \
  template Tensor<T> scale<T>(const Tensor<T>&, T);                                            \
  template Tensor<T> add_scalar<T>(const Tensor<T>&, T);                                       \
  template Tensor<T> sum<T>(const Tensor<T>&);                                                 \
  template Tensor<T> mean<T>(const Tensor<T>&);                                                \
  template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                      \
  template Tensor<T> permute<T>(const Tensor<T>&, const std::vector<int>&);                    \
  template Tensor<T> concat<T>(const std::vector<Tensor<T>>&, int);                            \
  template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&, bool, bool);                \
  template Tensor<T> softmax_last<T>(const Tensor<T>&);                                        \
  template Tensor<T> median_axis<T>(const Tensor<T>&, int);                                    \
  template Tensor<T> norm_axis<T>(const Tensor<T>&, int);

CST_INSTANTIATE_TENSOR(float)
CST_INSTANTIATE_TENSOR(double)

#undef CST_INSTANTIATE_TENSOR

}  // namespace cst
