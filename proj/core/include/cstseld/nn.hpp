#pragma once

#include <random>

#include "cstseld/tensor.hpp"

namespace cst {

// Network primitives. Convolutions use stride 1; odd kernels are padded
// with zeros so the spatial extents are preserved. Pooling uses
// kernel == stride with exact tiling.

/// x [B,Ci,H,W] * w [Co,Ci,kh,kw] (+ bias [Co]) -> [B,Co,H,W].
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

/// x [B,C,H,W] * w [C,kh,kw] -> [B,C,H,W], one kernel per channel.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w);

/// x [...,Din] * w [Din,Dout] + b [Dout] -> [...,Dout].
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias);

/// Per-channel batch norm over (B,H,W). Train mode normalizes with batch
/// statistics and updates the running buffers in place; eval mode uses the
/// running buffers.
template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, bool train,
                       T momentum = T(0.9), T eps = T(1e-5));

/// Layer norm over the last axis.
template <typename T>
Tensor<T> layer_norm_last(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps = T(1e-5));

template <typename T> Tensor<T> relu(const Tensor<T>& x);
template <typename T> Tensor<T> gelu(const Tensor<T>& x);
template <typename T> Tensor<T> tanh_act(const Tensor<T>& x);

/// Inverted dropout; identity when train is false or rate is zero.
template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, bool train, std::mt19937_64& rng);

/// kernel == stride max pool on [B,C,H,W]; extents must tile exactly.
/// The backward pass routes gradient to the first maximal element in
/// row-major window order.
template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::int64_t pool_h, std::int64_t pool_w);

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::int64_t pool_h, std::int64_t pool_w);

/// Packs non-overlapping (kt,kf) patches into the channel axis:
/// out(c*kt*kf + i*kf + j, p, q) = in(c, p*kt+i, q*kf+j).
/// Accepts [C,T,F] or batched [B,C,T,F].
template <typename T>
Tensor<T> unfold(const Tensor<T>& x, std::int64_t kt, std::int64_t kf);

/// Exact inverse of unfold for the same (kt,kf).
template <typename T>
Tensor<T> fold(const Tensor<T>& x, std::int64_t kt, std::int64_t kf);

/// Multiplies by a constant 0/1 mask. With straight_through the backward
/// pass ignores the mask (identity gradient); otherwise masked entries get
/// zero gradient.
template <typename T>
Tensor<T> mask_scale(const Tensor<T>& x, const std::vector<T>& mask, bool straight_through);

/// He-style uniform init, limit sqrt(6 / fan_in).
template <typename T>
Tensor<T> he_uniform(Shape shape, std::int64_t fan_in, std::mt19937_64& rng);

}  // namespace cst
