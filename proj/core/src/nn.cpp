#include "cstseld/nn.hpp"

#include <algorithm>
#include <cmath>

#include "op_common.hpp"

namespace cst {

using detail::accumulate;
using detail::make_op;

// ---- convolutions --------------------------------------------------------

namespace {

// Correlation kernel shared by the regular and depthwise paths:
// out[b,co,h,w] += sum_{ci,kh,kw} x[b, ci, h+kh-ph, w+kw-pw] * w[co,ci,kh,kw]
// with zero padding. Depthwise passes ci_per_co == 1 and groups == C.
template <typename T>
void conv_forward(const T* x, const T* w, T* y, std::int64_t B, std::int64_t Ci, std::int64_t Co,
                  std::int64_t H, std::int64_t W, std::int64_t KH, std::int64_t KW, bool depthwise) {
  const std::int64_t ph = KH / 2, pw = KW / 2;
  const std::int64_t xC = H * W;
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t co = 0; co < Co; ++co) {
      T* yrow = y + (b * Co + co) * xC;
      const std::int64_t ci_lo = depthwise ? co : 0;
      const std::int64_t ci_hi = depthwise ? co + 1 : Ci;
      for (std::int64_t ci = ci_lo; ci < ci_hi; ++ci) {
        const T* xch = x + (b * Ci + ci) * xC;
        const T* wk = depthwise ? w + co * KH * KW : w + (co * Ci + ci) * KH * KW;
        for (std::int64_t kh = 0; kh < KH; ++kh) {
          for (std::int64_t kw = 0; kw < KW; ++kw) {
            const T wv = wk[kh * KW + kw];
            if (wv == T(0)) continue;
            const std::int64_t dh = kh - ph, dw = kw - pw;
            const std::int64_t h0 = std::max<std::int64_t>(0, -dh);
            const std::int64_t h1 = std::min(H, H - dh);
            const std::int64_t w0 = std::max<std::int64_t>(0, -dw);
            const std::int64_t w1 = std::min(W, W - dw);
            for (std::int64_t h = h0; h < h1; ++h) {
              const T* xr = xch + (h + dh) * W + dw;
              T* yr = yrow + h * W;
              for (std::int64_t ww = w0; ww < w1; ++ww) yr[ww] += wv * xr[ww];
            }
          }
        }
      }
    }
  }
}

// dX for the correlation above: full correlation of dY with the kernel
// transposed in the channel axes and flipped spatially.
template <typename T>
void conv_backward_input(const T* dy, const T* w, T* dx, std::int64_t B, std::int64_t Ci,
                         std::int64_t Co, std::int64_t H, std::int64_t W, std::int64_t KH,
                         std::int64_t KW, bool depthwise) {
  const std::int64_t ph = KH / 2, pw = KW / 2;
  const std::int64_t plane = H * W;
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t co = 0; co < Co; ++co) {
      const T* dyrow = dy + (b * Co + co) * plane;
      const std::int64_t ci_lo = depthwise ? co : 0;
      const std::int64_t ci_hi = depthwise ? co + 1 : Ci;
      for (std::int64_t ci = ci_lo; ci < ci_hi; ++ci) {
        T* dxch = dx + (b * Ci + ci) * plane;
        const T* wk = depthwise ? w + co * KH * KW : w + (co * Ci + ci) * KH * KW;
        for (std::int64_t kh = 0; kh < KH; ++kh) {
          for (std::int64_t kw = 0; kw < KW; ++kw) {
            const T wv = wk[kh * KW + kw];
            if (wv == T(0)) continue;
            const std::int64_t dh = kh - ph, dw = kw - pw;
            // dx[h+dh, w+dw] += dy[h, w] * wv
            const std::int64_t h0 = std::max<std::int64_t>(0, -dh);
            const std::int64_t h1 = std::min(H, H - dh);
            const std::int64_t w0 = std::max<std::int64_t>(0, -dw);
            const std::int64_t w1 = std::min(W, W - dw);
            for (std::int64_t h = h0; h < h1; ++h) {
              T* dxr = dxch + (h + dh) * W + dw;
              const T* dyr = dyrow + h * W;
              for (std::int64_t ww = w0; ww < w1; ++ww) dxr[ww] += wv * dyr[ww];
            }
          }
        }
      }
    }
  }
}

template <typename T>
void conv_backward_weight(const T* x, const T* dy, T* dw, std::int64_t B, std::int64_t Ci,
                          std::int64_t Co, std::int64_t H, std::int64_t W, std::int64_t KH,
                          std::int64_t KW, bool depthwise) {
  const std::int64_t ph = KH / 2, pw = KW / 2;
  const std::int64_t plane = H * W;
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t co = 0; co < Co; ++co) {
      const T* dyrow = dy + (b * Co + co) * plane;
      const std::int64_t ci_lo = depthwise ? co : 0;
      const std::int64_t ci_hi = depthwise ? co + 1 : Ci;
      for (std::int64_t ci = ci_lo; ci < ci_hi; ++ci) {
        const T* xch = x + (b * Ci + ci) * plane;
        T* wk = depthwise ? dw + co * KH * KW : dw + (co * Ci + ci) * KH * KW;
        for (std::int64_t kh = 0; kh < KH; ++kh) {
          for (std::int64_t kw = 0; kw < KW; ++kw) {
            const std::int64_t dh = kh - ph, dw2 = kw - pw;
            const std::int64_t h0 = std::max<std::int64_t>(0, -dh);
            const std::int64_t h1 = std::min(H, H - dh);
            const std::int64_t w0 = std::max<std::int64_t>(0, -dw2);
            const std::int64_t w1 = std::min(W, W - dw2);
            T acc = T(0);
            for (std::int64_t h = h0; h < h1; ++h) {
              const T* xr = xch + (h + dh) * W + dw2;
              const T* dyr = dyrow + h * W;
              for (std::int64_t ww = w0; ww < w1; ++ww) acc += xr[ww] * dyr[ww];
            }
            wk[kh * KW + kw] += acc;
          }
        }
      }
    }
  }
}

}  // namespace

template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (x.rank() != 4 || w.rank() != 4)
    throw ConfigError("conv2d: expected x [B,Ci,H,W] and w [Co,Ci,kh,kw]");
  const std::int64_t B = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t Co = w.dim(0), KH = w.dim(2), KW = w.dim(3);
  if (w.dim(1) != Ci) throw ConfigError("conv2d: channel mismatch");
  if (KH % 2 == 0 || KW % 2 == 0) throw ConfigError("conv2d: kernel extents must be odd");
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != Co))
    throw ConfigError("conv2d: bias must be [Co]");

  std::vector<T> out(static_cast<std::size_t>(B * Co * H * W), T(0));
  conv_forward(x.data(), w.data(), out.data(), B, Ci, Co, H, W, KH, KW, false);
  if (has_bias) {
    const T* bp = bias.data();
    for (std::int64_t b = 0; b < B; ++b)
      for (std::int64_t co = 0; co < Co; ++co) {
        T* y = out.data() + (b * Co + co) * H * W;
        for (std::int64_t i = 0; i < H * W; ++i) y[i] += bp[co];
      }
  }

  std::vector<T> xv = x.values();
  std::vector<T> wv = w.values();
  std::vector<std::shared_ptr<TensorNode<T>>> inputs{x.node(), w.node()};
  if (has_bias) inputs.push_back(bias.node());
  auto backward = [=, xv = std::move(xv), wv = std::move(wv)](TensorNode<T>& n) {
    auto& ix = *n.inputs[0];
    auto& iw = *n.inputs[1];
    if (ix.requires_grad) {
      ix.ensure_grad();
      conv_backward_input(n.grad.data(), wv.data(), ix.grad.data(), B, Ci, Co, H, W, KH, KW, false);
    }
    if (iw.requires_grad) {
      iw.ensure_grad();
      conv_backward_weight(xv.data(), n.grad.data(), iw.grad.data(), B, Ci, Co, H, W, KH, KW,
                           false);
    }
    if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
      auto& ib = *n.inputs[2];
      ib.ensure_grad();
      for (std::int64_t b = 0; b < B; ++b)
        for (std::int64_t co = 0; co < Co; ++co) {
          const T* g = n.grad.data() + (b * Co + co) * H * W;
          T acc = T(0);
          for (std::int64_t i = 0; i < H * W; ++i) acc += g[i];
          ib.grad[static_cast<std::size_t>(co)] += acc;
        }
    }
  };
  return make_op<T>("conv2d", Shape{B, Co, H, W}, std::move(out), std::move(inputs),
                    std::move(backward));
}

template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& w) {
  if (x.rank() != 4 || w.rank() != 3)
    throw ConfigError("depthwise_conv2d: expected x [B,C,H,W] and w [C,kh,kw]");
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const std::int64_t KH = w.dim(1), KW = w.dim(2);
  if (w.dim(0) != C) throw ConfigError("depthwise_conv2d: channel mismatch");
  if (KH % 2 == 0 || KW % 2 == 0) throw ConfigError("depthwise_conv2d: kernel extents must be odd");

  std::vector<T> out(static_cast<std::size_t>(B * C * H * W), T(0));
  conv_forward(x.data(), w.data(), out.data(), B, C, C, H, W, KH, KW, true);

  std::vector<T> xv = x.values();
  std::vector<T> wv = w.values();
  auto backward = [=, xv = std::move(xv), wv = std::move(wv)](TensorNode<T>& n) {
    auto& ix = *n.inputs[0];
    auto& iw = *n.inputs[1];
    if (ix.requires_grad) {
      ix.ensure_grad();
      conv_backward_input(n.grad.data(), wv.data(), ix.grad.data(), B, C, C, H, W, KH, KW, true);
    }
    if (iw.requires_grad) {
      iw.ensure_grad();
      conv_backward_weight(xv.data(), n.grad.data(), iw.grad.data(), B, C, C, H, W, KH, KW, true);
    }
  };
  return make_op<T>("depthwise_conv2d", Shape{B, C, H, W}, std::move(out),
                    {x.node(), w.node()}, std::move(backward));
}

// ---- linear --------------------------------------------------------------

template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& bias) {
  if (x.rank() < 1 || w.rank() != 2) throw ConfigError("linear: expected x [...,Din], w [Din,Dout]");
  const std::int64_t din = x.dim(x.rank() - 1);
  const std::int64_t dout = w.dim(1);
  if (w.dim(0) != din) throw ConfigError("linear: input width mismatch");
  const std::int64_t rows = x.numel() / din;
  const bool has_bias = bias.defined();
  if (has_bias && (bias.rank() != 1 || bias.dim(0) != dout))
    throw ConfigError("linear: bias must be [Dout]");

  std::vector<T> out(static_cast<std::size_t>(rows * dout), T(0));
  const T* xp = x.data();
  const T* wp = w.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    T* y = out.data() + r * dout;
    const T* xr = xp + r * din;
    for (std::int64_t i = 0; i < din; ++i) {
      const T xv = xr[i];
      if (xv == T(0)) continue;
      const T* wr = wp + i * dout;
      for (std::int64_t j = 0; j < dout; ++j) y[j] += xv * wr[j];
    }
    if (has_bias) {
      const T* bp = bias.data();
      for (std::int64_t j = 0; j < dout; ++j) y[j] += bp[j];
    }
  }

  Shape out_shape = x.shape();
  out_shape.back() = dout;
  std::vector<T> xv = x.values();
  std::vector<T> wv = w.values();
  std::vector<std::shared_ptr<TensorNode<T>>> inputs{x.node(), w.node()};
  if (has_bias) inputs.push_back(bias.node());
  auto backward = [=, xv = std::move(xv), wv = std::move(wv)](TensorNode<T>& n) {
    auto& ix = *n.inputs[0];
    auto& iw = *n.inputs[1];
    if (ix.requires_grad) {
      ix.ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* dy = n.grad.data() + r * dout;
        T* dx = ix.grad.data() + r * din;
        for (std::int64_t i = 0; i < din; ++i) {
          const T* wr = wv.data() + i * dout;
          T acc = T(0);
          for (std::int64_t j = 0; j < dout; ++j) acc += dy[j] * wr[j];
          dx[i] += acc;
        }
      }
    }
    if (iw.requires_grad) {
      iw.ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* dy = n.grad.data() + r * dout;
        const T* xr = xv.data() + r * din;
        for (std::int64_t i = 0; i < din; ++i) {
          const T xvv = xr[i];
          if (xvv == T(0)) continue;
          T* dwr = iw.grad.data() + i * dout;
          for (std::int64_t j = 0; j < dout; ++j) dwr[j] += xvv * dy[j];
        }
      }
    }
    if (n.inputs.size() > 2 && n.inputs[2]->requires_grad) {
      auto& ib = *n.inputs[2];
      ib.ensure_grad();
      for (std::int64_t r = 0; r < rows; ++r) {
        const T* dy = n.grad.data() + r * dout;
        for (std::int64_t j = 0; j < dout; ++j) ib.grad[static_cast<std::size_t>(j)] += dy[j];
      }
    }
  };
  return make_op<T>("linear", std::move(out_shape), std::move(out), std::move(inputs),
                    std::move(backward));
}

// ---- normalization ---------------------------------------------------------

template <typename T>
Tensor<T> batch_norm2d(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                       Tensor<T>& running_mean, Tensor<T>& running_var, bool train, T momentum,
                       T eps) {
  if (x.rank() != 4) throw ConfigError("batch_norm2d: expected [B,C,H,W]");
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.numel() != C || beta.numel() != C || running_mean.numel() != C ||
      running_var.numel() != C)
    throw ConfigError("batch_norm2d: parameter extent mismatch");
  const std::int64_t plane = H * W;
  const std::int64_t reduce = B * plane;

  std::vector<T> mean_c(static_cast<std::size_t>(C), T(0));
  std::vector<T> var_c(static_cast<std::size_t>(C), T(0));
  const T* xp = x.data();
  if (train) {
    for (std::int64_t c = 0; c < C; ++c) {
      T acc = T(0);
      for (std::int64_t b = 0; b < B; ++b) {
        const T* p = xp + (b * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) acc += p[i];
      }
      const T mu = acc / static_cast<T>(reduce);
      T vacc = T(0);
      for (std::int64_t b = 0; b < B; ++b) {
        const T* p = xp + (b * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          const T d = p[i] - mu;
          vacc += d * d;
        }
      }
      mean_c[static_cast<std::size_t>(c)] = mu;
      var_c[static_cast<std::size_t>(c)] = vacc / static_cast<T>(reduce);
    }
    // update running buffers in place (they live outside the graph)
    auto& rm = running_mean.mutable_values();
    auto& rv = running_var.mutable_values();
    for (std::int64_t c = 0; c < C; ++c) {
      rm[static_cast<std::size_t>(c)] =
          momentum * rm[static_cast<std::size_t>(c)] + (T(1) - momentum) * mean_c[static_cast<std::size_t>(c)];
      rv[static_cast<std::size_t>(c)] =
          momentum * rv[static_cast<std::size_t>(c)] + (T(1) - momentum) * var_c[static_cast<std::size_t>(c)];
    }
  } else {
    mean_c = running_mean.values();
    var_c = running_var.values();
  }

  std::vector<T> xhat(static_cast<std::size_t>(x.numel()));
  std::vector<T> out(static_cast<std::size_t>(x.numel()));
  std::vector<T> inv_std(static_cast<std::size_t>(C));
  const T* gp = gamma.data();
  const T* bp = beta.data();
  for (std::int64_t c = 0; c < C; ++c)
    inv_std[static_cast<std::size_t>(c)] = T(1) / std::sqrt(var_c[static_cast<std::size_t>(c)] + eps);
  for (std::int64_t b = 0; b < B; ++b) {
    for (std::int64_t c = 0; c < C; ++c) {
      const T mu = mean_c[static_cast<std::size_t>(c)];
      const T is = inv_std[static_cast<std::size_t>(c)];
      const T g = gp[c], be = bp[c];
      const T* p = xp + (b * C + c) * plane;
      T* xh = xhat.data() + (b * C + c) * plane;
      T* y = out.data() + (b * C + c) * plane;
      for (std::int64_t i = 0; i < plane; ++i) {
        xh[i] = (p[i] - mu) * is;
        y[i] = g * xh[i] + be;
      }
    }
  }

  std::vector<T> gv = gamma.values();
  auto backward = [=, xhat = std::move(xhat), inv_std = std::move(inv_std),
                   gv = std::move(gv)](TensorNode<T>& n) {
    auto& ix = *n.inputs[0];
    auto& ig = *n.inputs[1];
    auto& ib = *n.inputs[2];
    if (ig.requires_grad) ig.ensure_grad();
    if (ib.requires_grad) ib.ensure_grad();
    if (ix.requires_grad) ix.ensure_grad();
    for (std::int64_t c = 0; c < C; ++c) {
      T sum_dy = T(0), sum_dy_xhat = T(0);
      for (std::int64_t b = 0; b < B; ++b) {
        const T* dy = n.grad.data() + (b * C + c) * plane;
        const T* xh = xhat.data() + (b * C + c) * plane;
        for (std::int64_t i = 0; i < plane; ++i) {
          sum_dy += dy[i];
          sum_dy_xhat += dy[i] * xh[i];
        }
      }
      if (ig.requires_grad) ig.grad[static_cast<std::size_t>(c)] += sum_dy_xhat;
      if (ib.requires_grad) ib.grad[static_cast<std::size_t>(c)] += sum_dy;
      if (ix.requires_grad) {
        const T g_is = gv[static_cast<std::size_t>(c)] * inv_std[static_cast<std::size_t>(c)];
        if (train) {
          const T mean_dy = sum_dy / static_cast<T>(reduce);
          const T mean_dy_xhat = sum_dy_xhat / static_cast<T>(reduce);
          for (std::int64_t b = 0; b < B; ++b) {
            const T* dy = n.grad.data() + (b * C + c) * plane;
            const T* xh = xhat.data() + (b * C + c) * plane;
            T* dx = ix.grad.data() + (b * C + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i)
              dx[i] += g_is * (dy[i] - mean_dy - xh[i] * mean_dy_xhat);
          }
        } else {
          for (std::int64_t b = 0; b < B; ++b) {
            const T* dy = n.grad.data() + (b * C + c) * plane;
            T* dx = ix.grad.data() + (b * C + c) * plane;
            for (std::int64_t i = 0; i < plane; ++i) dx[i] += g_is * dy[i];
          }
        }
      }
    }
  };
  return make_op<T>("batch_norm2d", x.shape(), std::move(out),
                    {x.node(), gamma.node(), beta.node()}, std::move(backward));
}

template <typename T>
Tensor<T> layer_norm_last(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                          T eps) {
  const std::int64_t D = x.dim(x.rank() - 1);
  if (gamma.numel() != D || beta.numel() != D)
    throw ConfigError("layer_norm_last: parameter extent mismatch");
  const std::int64_t rows = x.numel() / D;

  std::vector<T> out(static_cast<std::size_t>(x.numel()));
  std::vector<T> xhat(static_cast<std::size_t>(x.numel()));
  std::vector<T> inv_std(static_cast<std::size_t>(rows));
  const T* xp = x.data();
  const T* gp = gamma.data();
  const T* bp = beta.data();
  for (std::int64_t r = 0; r < rows; ++r) {
    const T* xr = xp + r * D;
    T mu = T(0);
    for (std::int64_t j = 0; j < D; ++j) mu += xr[j];
    mu /= static_cast<T>(D);
    T var = T(0);
    for (std::int64_t j = 0; j < D; ++j) {
      const T d = xr[j] - mu;
      var += d * d;
    }
    var /= static_cast<T>(D);
    const T is = T(1) / std::sqrt(var + eps);
    inv_std[static_cast<std::size_t>(r)] = is;
    T* xh = xhat.data() + r * D;
    T* y = out.data() + r * D;
    for (std::int64_t j = 0; j < D; ++j) {
      xh[j] = (xr[j] - mu) * is;
      y[j] = gp[j] * xh[j] + bp[j];
    }
  }

  std::vector<T> gv = gamma.values();
  auto backward = [=, xhat = std::move(xhat), inv_std = std::move(inv_std),
                   gv = std::move(gv)](TensorNode<T>& n) {
    auto& ix = *n.inputs[0];
    auto& ig = *n.inputs[1];
    auto& ib = *n.inputs[2];
    if (ig.requires_grad) ig.ensure_grad();
    if (ib.requires_grad) ib.ensure_grad();
    if (ix.requires_grad) ix.ensure_grad();
    for (std::int64_t r = 0; r < rows; ++r) {
      const T* dy = n.grad.data() + r * D;
      const T* xh = xhat.data() + r * D;
      if (ig.requires_grad || ib.requires_grad) {
        for (std::int64_t j = 0; j < D; ++j) {
          if (ig.requires_grad) ig.grad[static_cast<std::size_t>(j)] += dy[j] * xh[j];
          if (ib.requires_grad) ib.grad[static_cast<std::size_t>(j)] += dy[j];
        }
      }
      if (ix.requires_grad) {
        T mean_g = T(0), mean_gx = T(0);
        for (std::int64_t j = 0; j < D; ++j) {
          const T gdy = dy[j] * gv[static_cast<std::size_t>(j)];
          mean_g += gdy;
          mean_gx += gdy * xh[j];
        }
        mean_g /= static_cast<T>(D);
        mean_gx /= static_cast<T>(D);
        T* dx = ix.grad.data() + r * D;
        const T is = inv_std[static_cast<std::size_t>(r)];
        for (std::int64_t j = 0; j < D; ++j) {
          const T gdy = dy[j] * gv[static_cast<std::size_t>(j)];
          dx[j] += is * (gdy - mean_g - xh[j] * mean_gx);
        }
      }
    }
  };
  return make_op<T>("layer_norm_last", x.shape(), std::move(out),
                    {x.node(), gamma.node(), beta.node()}, std::move(backward));
}

// ---- activations -----------------------------------------------------------

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  std::vector<T> out(x.values());
  for (auto& v : out) v = v > T(0) ? v : T(0);
  std::vector<T> xv = x.values();
  return make_op<T>("relu", x.shape(), std::move(out), {x.node()},
                    [xv = std::move(xv)](TensorNode<T>& n) {
                      auto& in = *n.inputs[0];
                      in.ensure_grad();
                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                        if (xv[i] > T(0)) in.grad[i] += n.grad[i];
                    });
}

template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
  constexpr double kInvSqrt2 = 0.70710678118654752440;
  constexpr double kInvSqrt2Pi = 0.39894228040143267794;
  std::vector<T> out(x.values());
  for (auto& v : out) {
    const double xv = static_cast<double>(v);
    v = static_cast<T>(0.5 * xv * (1.0 + std::erf(xv * kInvSqrt2)));
  }
  std::vector<T> xv = x.values();
  return make_op<T>("gelu", x.shape(), std::move(out), {x.node()},
                    [xv = std::move(xv)](TensorNode<T>& n) {
                      auto& in = *n.inputs[0];
                      in.ensure_grad();
                      for (std::size_t i = 0; i < n.grad.size(); ++i) {
                        const double z = static_cast<double>(xv[i]);
                        const double cdf = 0.5 * (1.0 + std::erf(z * kInvSqrt2));
                        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * z * z);
                        in.grad[i] += n.grad[i] * static_cast<T>(cdf + z * pdf);
                      }
                    });
}

template <typename T>
Tensor<T> tanh_act(const Tensor<T>& x) {
  std::vector<T> out(x.values());
  for (auto& v : out) v = std::tanh(v);
  std::vector<T> yv = out;
  return make_op<T>("tanh", x.shape(), std::move(out), {x.node()},
                    [yv = std::move(yv)](TensorNode<T>& n) {
                      auto& in = *n.inputs[0];
                      in.ensure_grad();
                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                        in.grad[i] += n.grad[i] * (T(1) - yv[i] * yv[i]);
                    });
}

template <typename T>
Tensor<T> dropout(const Tensor<T>& x, T rate, bool train, std::mt19937_64& rng) {
  if (!train || rate <= T(0)) return scale(x, T(1));  // identity that still records the graph edge
  if (rate >= T(1)) throw ConfigError("dropout: rate must be < 1");
  std::bernoulli_distribution keep(1.0 - static_cast<double>(rate));
  const T inv_keep = T(1) / (T(1) - rate);
  std::vector<T> mask(static_cast<std::size_t>(x.numel()));
  for (auto& m : mask) m = keep(rng) ? inv_keep : T(0);
  return mask_scale(x, mask, false);
}

// ---- pooling ---------------------------------------------------------------

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, std::int64_t pool_h, std::int64_t pool_w) {
  if (x.rank() != 4) throw ConfigError("max_pool2d: expected [B,C,H,W]");
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (pool_h <= 0 || pool_w <= 0) throw ConfigError("max_pool2d: pool extents must be positive");
  if (H % pool_h != 0)
    throw ConfigError("max_pool2d: time extent " + std::to_string(H) + " not divisible by kernel " +
                      std::to_string(pool_h));
  if (W % pool_w != 0)
    throw ConfigError("max_pool2d: frequency extent " + std::to_string(W) +
                      " not divisible by kernel " + std::to_string(pool_w));
  const std::int64_t OH = H / pool_h, OW = W / pool_w;
  std::vector<T> out(static_cast<std::size_t>(B * C * OH * OW));
  std::vector<std::int64_t> argmax(out.size());
  const T* xp = x.data();
  std::int64_t o = 0;
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const T* plane = xp + bc * H * W;
    for (std::int64_t oh = 0; oh < OH; ++oh) {
      for (std::int64_t ow = 0; ow < OW; ++ow, ++o) {
        std::int64_t best_idx = (oh * pool_h) * W + ow * pool_w;
        T best = plane[best_idx];
        for (std::int64_t i = 0; i < pool_h; ++i) {
          for (std::int64_t j = 0; j < pool_w; ++j) {
            const std::int64_t idx = (oh * pool_h + i) * W + ow * pool_w + j;
            if (plane[idx] > best) {  // strict: first maximal element wins
              best = plane[idx];
              best_idx = idx;
            }
          }
        }
        out[static_cast<std::size_t>(o)] = best;
        argmax[static_cast<std::size_t>(o)] = bc * H * W + best_idx;
      }
    }
  }
  return make_op<T>("max_pool2d", Shape{B, C, OH, OW}, std::move(out), {x.node()},
                    [argmax = std::move(argmax)](TensorNode<T>& n) {
                      auto& in = *n.inputs[0];
                      in.ensure_grad();
                      for (std::size_t i = 0; i < n.grad.size(); ++i)
                        in.grad[static_cast<std::size_t>(argmax[i])] += n.grad[i];
                    });
}

template <typename T>
Tensor<T> avg_pool2d(const Tensor<T>& x, std::int64_t pool_h, std::int64_t pool_w) {
  if (x.rank() != 4) throw ConfigError("avg_pool2d: expected [B,C,H,W]");
  const std::int64_t B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (pool_h <= 0 || pool_w <= 0) throw ConfigError("avg_pool2d: pool extents must be positive");
  if (H % pool_h != 0 || W % pool_w != 0)
    throw ConfigError("avg_pool2d: extents must be divisible by the kernel");
  const std::int64_t OH = H / pool_h, OW = W / pool_w;
  const T inv = T(1) / static_cast<T>(pool_h * pool_w);
  std::vector<T> out(static_cast<std::size_t>(B * C * OH * OW), T(0));
  const T* xp = x.data();
  std::int64_t o = 0;
  for (std::int64_t bc = 0; bc < B * C; ++bc) {
    const T* plane = xp + bc * H * W;
    for (std::int64_t oh = 0; oh < OH; ++oh)
      for (std::int64_t ow = 0; ow < OW; ++ow, ++o) {
        T acc = T(0);
        for (std::int64_t i = 0; i < pool_h; ++i)
          for (std::int64_t j = 0; j < pool_w; ++j)
            acc += plane[(oh * pool_h + i) * W + ow * pool_w + j];
        out[static_cast<std::size_t>(o)] = acc * inv;
      }
  }
  return make_op<T>("avg_pool2d", Shape{B, C, OH, OW}, std::move(out), {x.node()},
                    [=](TensorNode<T>& n) {
                      auto& in = *n.inputs[0];
                      in.ensure_grad();
                      std::int64_t oo = 0;
                      for (std::int64_t bc = 0; bc < B * C; ++bc) {
                        T* dplane = in.grad.data() + bc * H * W;
                        for (std::int64_t oh = 0; oh < OH; ++oh)
                          for (std::int64_t ow = 0; ow < OW; ++ow, ++oo) {
                            const T g = n.grad[static_cast<std::size_t>(oo)] * inv;
                            for (std::int64_t i = 0; i < pool_h; ++i)
                              for (std::int64_t j = 0; j < pool_w; ++j)
                                dplane[(oh * pool_h + i) * W + ow * pool_w + j] += g;
                          }
                      }
                    });
}

// ---- unfold / fold -----------------------------------------------------------

namespace {

// Gather table mapping unfolded index -> source index for one batch item.
std::vector<std::int64_t> unfold_table(std::int64_t C, std::int64_t Tt, std::int64_t F,
                                       std::int64_t kt, std::int64_t kf) {
  const std::int64_t gt = Tt / kt, gf = F / kf;
  std::vector<std::int64_t> table(static_cast<std::size_t>(C * Tt * F));
  std::int64_t o = 0;
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t i = 0; i < kt; ++i)
      for (std::int64_t j = 0; j < kf; ++j)
        for (std::int64_t p = 0; p < gt; ++p)
          for (std::int64_t q = 0; q < gf; ++q, ++o)
            table[static_cast<std::size_t>(o)] = (c * Tt + (p * kt + i)) * F + (q * kf + j);
  return table;
}

}  // namespace

template <typename T>
Tensor<T> unfold(const Tensor<T>& x, std::int64_t kt, std::int64_t kf) {
  const int rank = x.rank();
  if (rank != 3 && rank != 4) throw ConfigError("unfold: expected [C,T,F] or [B,C,T,F]");
  if (kt <= 0 || kf <= 0) throw ConfigError("unfold: kernel extents must be positive");
  const std::int64_t B = rank == 4 ? x.dim(0) : 1;
  const std::int64_t C = x.dim(rank - 3), Tt = x.dim(rank - 2), F = x.dim(rank - 1);
  if (Tt % kt != 0)
    throw ConfigError("unfold: time extent " + std::to_string(Tt) + " not divisible by kernel " +
                      std::to_string(kt));
  if (F % kf != 0)
    throw ConfigError("unfold: frequency extent " + std::to_string(F) + " not divisible by kernel " +
                      std::to_string(kf));

  auto table = unfold_table(C, Tt, F, kt, kf);
  const std::int64_t per_item = C * Tt * F;
  std::vector<T> out(static_cast<std::size_t>(B * per_item));
  const T* xp = x.data();
  for (std::int64_t b = 0; b < B; ++b) {
    const T* src = xp + b * per_item;
    T* dst = out.data() + b * per_item;
    for (std::int64_t i = 0; i < per_item; ++i) dst[i] = src[table[static_cast<std::size_t>(i)]];
  }
  Shape out_shape = rank == 4 ? Shape{B, C * kt * kf, Tt / kt, F / kf}
                              : Shape{C * kt * kf, Tt / kt, F / kf};
  return make_op<T>("unfold", std::move(out_shape), std::move(out), {x.node()},
                    [B, per_item, table = std::move(table)](TensorNode<T>& n) {
                      auto& in = *n.inputs[0];
                      in.ensure_grad();
                      for (std::int64_t b = 0; b < B; ++b) {
                        const T* g = n.grad.data() + b * per_item;
                        T* dst = in.grad.data() + b * per_item;
                        for (std::int64_t i = 0; i < per_item; ++i)
                          dst[table[static_cast<std::size_t>(i)]] += g[i];
                      }
                    });
}

template <typename T>
Tensor<T> fold(const Tensor<T>& x, std::int64_t kt, std::int64_t kf) {
  const int rank = x.rank();
  if (rank != 3 && rank != 4) throw ConfigError("fold: expected [C*kt*kf,T/kt,F/kf] input");
  if (kt <= 0 || kf <= 0) throw ConfigError("fold: kernel extents must be positive");
  const std::int64_t B = rank == 4 ? x.dim(0) : 1;
  const std::int64_t CK = x.dim(rank - 3), gt = x.dim(rank - 2), gf = x.dim(rank - 1);
  if (CK % (kt * kf) != 0)
    throw ConfigError("fold: channel extent " + std::to_string(CK) +
                      " not divisible by kernel area " + std::to_string(kt * kf));
  const std::int64_t C = CK / (kt * kf);
  const std::int64_t Tt = gt * kt, F = gf * kf;

  auto table = unfold_table(C, Tt, F, kt, kf);  // unfolded index -> folded index
  const std::int64_t per_item = C * Tt * F;
  std::vector<T> out(static_cast<std::size_t>(B * per_item));
  const T* xp = x.data();
  for (std::int64_t b = 0; b < B; ++b) {
    const T* src = xp + b * per_item;
    T* dst = out.data() + b * per_item;
    for (std::int64_t i = 0; i < per_item; ++i) dst[table[static_cast<std::size_t>(i)]] = src[i];
  }
  Shape out_shape = rank == 4 ? Shape{B, C, Tt, F} : Shape{C, Tt, F};
  return make_op<T>("fold", std::move(out_shape), std::move(out), {x.node()},
                    [B, per_item, table = std::move(table)](TensorNode<T>& n) {
                      auto& in = *n.inputs[0];
                      in.ensure_grad();
                      for (std::int64_t b = 0; b < B; ++b) {
                        const T* g = n.grad.data() + b * per_item;
                        T* dst = in.grad.data() + b * per_item;
                        for (std::int64_t i = 0; i < per_item; ++i)
                          dst[i] += g[table[static_cast<std::size_t>(i)]];
                      }
                    });
}

// ---- masking / init ---------------------------------------------------------

template <typename T>
Tensor<T> mask_scale(const Tensor<T>& x, const std::vector<T>& mask, bool straight_through) {
  if (static_cast<std::int64_t>(mask.size()) != x.numel())
    throw ConfigError("mask_scale: mask length mismatch");
  std::vector<T> out(x.values());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] *= mask[i];
  auto mask_copy = mask;
  return make_op<T>("mask_scale", x.shape(), std::move(out), {x.node()},
                    [straight_through, mask_copy = std::move(mask_copy)](TensorNode<T>& n) {
                      auto& in = *n.inputs[0];
                      in.ensure_grad();
                      if (straight_through) {
                        for (std::size_t i = 0; i < n.grad.size(); ++i) in.grad[i] += n.grad[i];
                      } else {
                        for (std::size_t i = 0; i < n.grad.size(); ++i)
                          in.grad[i] += n.grad[i] * mask_copy[i];
                      }
                    });
}

template <typename T>
Tensor<T> he_uniform(Shape shape, std::int64_t fan_in, std::mt19937_64& rng) {
  if (fan_in <= 0) throw ConfigError("he_uniform: fan_in must be positive");
  const double limit = std::sqrt(6.0 / static_cast<double>(fan_in));
  std::uniform_real_distribution<double> dist(-limit, limit);
  std::vector<T> data(static_cast<std::size_t>(shape_numel(shape)));
  for (auto& v : data) v = static_cast<T>(dist(rng));
  return Tensor<T>(std::move(shape), std::move(data));
}

// ---- explicit instantiations --------------------------------------------

#define CST_INSTANTIATE_NN(T)                                                                   \
  template Tensor<T> conv2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> depthwise_conv2d<T>(const Tensor<T>&, const Tensor<T>&);                   \
  template Tensor<T> linear<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&);           \
  template Tensor<T> batch_norm2d<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,      \
                                     Tensor<T>&, Tensor<T>&, bool, T, T);                       \
  template Tensor<T> layer_norm_last<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&,   \
                                        T);                                                     \
  template Tensor<T> relu<T>(const Tensor<T>&);                                                 \
  template Tensor<T> gelu<T>(const Tensor<T>&);                                                 \
  template Tensor<T> tanh_act<T>(const Tensor<T>&);                                             \
  template Tensor<T> dropout<T>(const Tensor<T>&, T, bool, std::mt19937_64&);                   \
  template Tensor<T> max_pool2d<T>(const Tensor<T>&, std::int64_t, std::int64_t);               \
  template Tensor<T> avg_pool2d<T>(const Tensor<T>&, std::int64_t, std::int64_t);               \
  template Tensor<T> unfold<T>(const Tensor<T>&, std::int64_t, std::int64_t);                   \
  template Tensor<T> fold<T>(const Tensor<T>&, std::int64_t, std::int64_t);                     \
  template Tensor<T> mask_scale<T>(const Tensor<T>&, const std::vector<T>&, bool);              \
  template Tensor<T> he_uniform<T>(Shape, std::int64_t, std::mt19937_64&);

CST_INSTANTIATE_NN(float)
CST_INSTANTIATE_NN(double)

#undef CST_INSTANTIATE_NN

}  // namespace cst
