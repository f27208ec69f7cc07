#pragma once

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dbtanet/core/tensor.hpp"

namespace dbtanet {

enum class PadMode { Zero, Reflect };

namespace detail {

// Symmetric (edge-inclusive) reflection: -1 -> 0, n -> n-1.
inline int reflect_index(int i, int n) {
  while (i < 0 || i >= n) {
    if (i < 0) i = -i - 1;
    if (i >= n) i = 2 * n - 1 - i;
  }
  return i;
}

template <typename T>
using MatMap = Eigen::Map<Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;
template <typename T>
using ConstMatMap =
    Eigen::Map<const Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>;

template <typename T>
inline void require_rank4(const Tensor<T>& x, const char* op) {
  if (x.ndim() != 4) throw ValidationError(std::string(op) + ": expected rank-4 input, got " + shape_str(x.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "add");
  bool rg = grad_needed(a) || grad_needed(b);
  Tensor<T> y(a.shape(), rg);
  const T* pa = a.data();
  const T* pb = b.data();
  T* py = y.data();
  for (int64_t i = 0; i < y.size(); ++i) py[i] = pa[i] + pb[i];
  if (rg) {
    Tape<T>::current()->record([a, b, y]() mutable {
      const T* g = y.grad();
      if (a.requires_grad()) {
        T* ga = a.grad();
        for (int64_t i = 0; i < y.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        for (int64_t i = 0; i < y.size(); ++i) gb[i] += g[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "sub");
  bool rg = grad_needed(a) || grad_needed(b);
  Tensor<T> y(a.shape(), rg);
  for (int64_t i = 0; i < y.size(); ++i) y.data()[i] = a.data()[i] - b.data()[i];
  if (rg) {
    Tape<T>::current()->record([a, b, y]() mutable {
      const T* g = y.grad();
      if (a.requires_grad()) {
        T* ga = a.grad();
        for (int64_t i = 0; i < y.size(); ++i) ga[i] += g[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        for (int64_t i = 0; i < y.size(); ++i) gb[i] -= g[i];
      }
    });
  }
  return y;
}

// |a - b| elementwise; subgradient 0 at equality.
template <typename T>
Tensor<T> abs_diff(const Tensor<T>& a, const Tensor<T>& b) {
  require_same_shape(a, b, "abs_diff");
  bool rg = grad_needed(a) || grad_needed(b);
  Tensor<T> y(a.shape(), rg);
  for (int64_t i = 0; i < y.size(); ++i) y.data()[i] = std::abs(a.data()[i] - b.data()[i]);
  if (rg) {
    Tape<T>::current()->record([a, b, y]() mutable {
      const T* g = y.grad();
      const T* pa = a.data();
      const T* pb = b.data();
      T* ga = a.requires_grad() ? a.grad() : nullptr;
      T* gb = b.requires_grad() ? b.grad() : nullptr;
      for (int64_t i = 0; i < y.size(); ++i) {
        T d = pa[i] - pb[i];
        T s = d > T(0) ? T(1) : (d < T(0) ? T(-1) : T(0));
        if (ga) ga[i] += s * g[i];
        if (gb) gb[i] -= s * g[i];
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> relu(const Tensor<T>& x) {
  bool rg = grad_needed(x);
  Tensor<T> y(x.shape(), rg);
  for (int64_t i = 0; i < y.size(); ++i) y.data()[i] = x.data()[i] > T(0) ? x.data()[i] : T(0);
  if (rg) {
    Tape<T>::current()->record([x, y]() mutable {
      const T* g = y.grad();
      const T* px = x.data();
      T* gx = x.grad();
      for (int64_t i = 0; i < y.size(); ++i)
        if (px[i] > T(0)) gx[i] += g[i];
    });
  }
  return y;
}

template <typename T>
inline T sigmoid_scalar(T x) {
  if (x >= T(0)) {
    T e = std::exp(-x);
    return T(1) / (T(1) + e);
  }
  T e = std::exp(x);
  return e / (T(1) + e);
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
  bool rg = grad_needed(x);
  Tensor<T> y(x.shape(), rg);
  for (int64_t i = 0; i < y.size(); ++i) y.data()[i] = sigmoid_scalar(x.data()[i]);
  if (rg) {
    Tape<T>::current()->record([x, y]() mutable {
      const T* g = y.grad();
      const T* py = y.data();
      T* gx = x.grad();
      for (int64_t i = 0; i < y.size(); ++i) gx[i] += g[i] * py[i] * (T(1) - py[i]);
    });
  }
  return y;
}

// (1-gamma)*a + gamma*b with a fixed blend weight.
template <typename T>
Tensor<T> lerp_const(const Tensor<T>& a, const Tensor<T>& b, T gamma) {
  require_same_shape(a, b, "lerp_const");
  bool rg = grad_needed(a) || grad_needed(b);
  Tensor<T> y(a.shape(), rg);
  for (int64_t i = 0; i < y.size(); ++i)
    y.data()[i] = (T(1) - gamma) * a.data()[i] + gamma * b.data()[i];
  if (rg) {
    Tape<T>::current()->record([a, b, y, gamma]() mutable {
      const T* g = y.grad();
      if (a.requires_grad()) {
        T* ga = a.grad();
        for (int64_t i = 0; i < y.size(); ++i) ga[i] += (T(1) - gamma) * g[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        for (int64_t i = 0; i < y.size(); ++i) gb[i] += gamma * g[i];
      }
    });
  }
  return y;
}

// (1-g)*a + g*b where g is a learnable scalar tensor of shape [1].
template <typename T>
Tensor<T> scalar_gate(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& g) {
  require_same_shape(a, b, "scalar_gate");
  if (g.size() != 1) throw ValidationError("scalar_gate: gate must be a scalar tensor");
  bool rg = grad_needed(a) || grad_needed(b) || grad_needed(g);
  Tensor<T> y(a.shape(), rg);
  T gv = g.data()[0];
  for (int64_t i = 0; i < y.size(); ++i)
    y.data()[i] = (T(1) - gv) * a.data()[i] + gv * b.data()[i];
  if (rg) {
    Tape<T>::current()->record([a, b, g, y]() mutable {
      const T* gy = y.grad();
      T gv = g.data()[0];
      if (a.requires_grad()) {
        T* ga = a.grad();
        for (int64_t i = 0; i < y.size(); ++i) ga[i] += (T(1) - gv) * gy[i];
      }
      if (b.requires_grad()) {
        T* gb = b.grad();
        for (int64_t i = 0; i < y.size(); ++i) gb[i] += gv * gy[i];
      }
      if (g.requires_grad()) {
        double acc = 0.0;
        for (int64_t i = 0; i < y.size(); ++i)
          acc += static_cast<double>((b.data()[i] - a.data()[i]) * gy[i]);
        g.grad()[0] += static_cast<T>(acc);
      }
    });
  }
  return y;
}

template <typename T>
Tensor<T> scale_const(const Tensor<T>& x, T s) {
  bool rg = grad_needed(x);
  Tensor<T> y(x.shape(), rg);
  for (int64_t i = 0; i < y.size(); ++i) y.data()[i] = s * x.data()[i];
  if (rg) {
    Tape<T>::current()->record([x, y, s]() mutable {
      const T* g = y.grad();
      T* gx = x.grad();
      for (int64_t i = 0; i < y.size(); ++i) gx[i] += s * g[i];
    });
  }
  return y;
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) {
  bool rg = grad_needed(x);
  Tensor<T> y(Shape{1}, rg);
  double acc = 0.0;
  for (int64_t i = 0; i < x.size(); ++i) acc += static_cast<double>(x.data()[i]);
  y.data()[0] = static_cast<T>(acc);
  if (rg) {
    Tape<T>::current()->record([x, y]() mutable {
      T g = y.grad()[0];
      T* gx = x.grad();
      for (int64_t i = 0; i < x.size(); ++i) gx[i] += g;
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Channel concatenation
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> concat_channels(const std::vector<Tensor<T>>& xs) {
  if (xs.empty()) throw ValidationError("concat_channels: empty input list");
  detail::require_rank4(xs[0], "concat_channels");
  int B = xs[0].dim(0), H = xs[0].dim(2), W = xs[0].dim(3);
  int Cout = 0;
  bool rg = false;
  for (const auto& x : xs) {
    detail::require_rank4(x, "concat_channels");
    if (x.dim(0) != B || x.dim(2) != H || x.dim(3) != W)
      throw ValidationError("concat_channels: spatial/batch mismatch");
    Cout += x.dim(1);
    rg = rg || grad_needed(x);
  }
  Tensor<T> y(Shape{B, Cout, H, W}, rg);
  int64_t hw = int64_t(H) * W;
  int coff = 0;
  for (const auto& x : xs) {
    int C = x.dim(1);
    for (int b = 0; b < B; ++b) {
      const T* src = x.data() + (int64_t(b) * C) * hw;
      T* dst = y.data() + (int64_t(b) * Cout + coff) * hw;
      std::copy(src, src + int64_t(C) * hw, dst);
    }
    coff += C;
  }
  if (rg) {
    Tape<T>::current()->record([xs, y, B, Cout, hw]() mutable {
      const T* g = y.grad();
      int coff = 0;
      for (auto& x : xs) {
        int C = x.dim(1);
        if (x.requires_grad()) {
          T* gx = x.grad();
          for (int b = 0; b < B; ++b) {
            const T* gsrc = g + (int64_t(b) * Cout + coff) * hw;
            T* gdst = gx + (int64_t(b) * C) * hw;
            for (int64_t i = 0; i < int64_t(C) * hw; ++i) gdst[i] += gsrc[i];
          }
        }
        coff += C;
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Convolution (im2col + GEMM)
// ---------------------------------------------------------------------------

struct ConvSpec {
  int stride = 1;
  int pad = 0;
  int dilation = 1;
  PadMode pad_mode = PadMode::Zero;
};

namespace detail {

inline int conv_out_size(int in, int k, int stride, int pad, int dilation) {
  return (in + 2 * pad - dilation * (k - 1) - 1) / stride + 1;
}

// Fills col [K x Ho*Wo] (K = Cin*kh*kw, row-major) for one batch item.
template <typename T>
void im2col(const T* x, int Cin, int H, int W, int kh, int kw, const ConvSpec& cs, int Ho,
            int Wo, T* col) {
  int64_t HW = int64_t(H) * W;
  int64_t out_hw = int64_t(Ho) * Wo;
  for (int ci = 0; ci < Cin; ++ci) {
    const T* xc = x + ci * HW;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        T* row = col + ((int64_t(ci) * kh + ki) * kw + kj) * out_hw;
        for (int oh = 0; oh < Ho; ++oh) {
          int ih = oh * cs.stride - cs.pad + ki * cs.dilation;
          bool hin = (ih >= 0 && ih < H);
          int rih = hin ? ih : (cs.pad_mode == PadMode::Reflect ? reflect_index(ih, H) : -1);
          for (int ow = 0; ow < Wo; ++ow) {
            int iw = ow * cs.stride - cs.pad + kj * cs.dilation;
            bool win = (iw >= 0 && iw < W);
            int riw = win ? iw : (cs.pad_mode == PadMode::Reflect ? reflect_index(iw, W) : -1);
            row[int64_t(oh) * Wo + ow] =
                (rih >= 0 && riw >= 0) ? xc[int64_t(rih) * W + riw] : T(0);
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter-adds dcol back into dx for one batch item.
template <typename T>
void col2im(const T* dcol, int Cin, int H, int W, int kh, int kw, const ConvSpec& cs, int Ho,
            int Wo, T* dx) {
  int64_t HW = int64_t(H) * W;
  int64_t out_hw = int64_t(Ho) * Wo;
  for (int ci = 0; ci < Cin; ++ci) {
    T* dxc = dx + ci * HW;
    for (int ki = 0; ki < kh; ++ki) {
      for (int kj = 0; kj < kw; ++kj) {
        const T* row = dcol + ((int64_t(ci) * kh + ki) * kw + kj) * out_hw;
        for (int oh = 0; oh < Ho; ++oh) {
          int ih = oh * cs.stride - cs.pad + ki * cs.dilation;
          bool hin = (ih >= 0 && ih < H);
          int rih = hin ? ih : (cs.pad_mode == PadMode::Reflect ? reflect_index(ih, H) : -1);
          if (rih < 0) continue;
          for (int ow = 0; ow < Wo; ++ow) {
            int iw = ow * cs.stride - cs.pad + kj * cs.dilation;
            bool win = (iw >= 0 && iw < W);
            int riw = win ? iw : (cs.pad_mode == PadMode::Reflect ? reflect_index(iw, W) : -1);
            if (riw < 0) continue;
            dxc[int64_t(rih) * W + riw] += row[int64_t(oh) * Wo + ow];
          }
        }
      }
    }
  }
}

}  // namespace detail

// x: [B, Cin, H, W], weight: [Cout, Cin, kh, kw], bias: [Cout] or undefined.
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& weight, const Tensor<T>& bias,
                 const ConvSpec& cs = {}) {
  detail::require_rank4(x, "conv2d");
  detail::require_rank4(weight, "conv2d weight");
  int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Cout = weight.dim(0), kh = weight.dim(2), kw = weight.dim(3);
  if (weight.dim(1) != Cin)
    throw ValidationError("conv2d: weight expects " + std::to_string(weight.dim(1)) +
                          " input channels, got " + std::to_string(Cin));
  if (bias.defined() && bias.size() != Cout) throw ValidationError("conv2d: bias size mismatch");
  int Ho = detail::conv_out_size(H, kh, cs.stride, cs.pad, cs.dilation);
  int Wo = detail::conv_out_size(W, kw, cs.stride, cs.pad, cs.dilation);
  if (Ho <= 0 || Wo <= 0)
    throw ValidationError("conv2d: output would be empty for input " + shape_str(x.shape()));

  bool rg = grad_needed(x) || grad_needed(weight) || (bias.defined() && grad_needed(bias));
  Tensor<T> y(Shape{B, Cout, Ho, Wo}, rg);

  int K = Cin * kh * kw;
  int64_t out_hw = int64_t(Ho) * Wo;
  std::vector<T> col(size_t(K) * out_hw);
  detail::ConstMatMap<T> Wm(weight.data(), Cout, K);
  for (int b = 0; b < B; ++b) {
    detail::im2col(x.data() + int64_t(b) * Cin * H * W, Cin, H, W, kh, kw, cs, Ho, Wo,
                   col.data());
    detail::ConstMatMap<T> Cm(col.data(), K, out_hw);
    detail::MatMap<T> Ym(y.data() + int64_t(b) * Cout * out_hw, Cout, out_hw);
    Ym.noalias() = Wm * Cm;
    if (bias.defined()) {
      for (int co = 0; co < Cout; ++co) {
        T bv = bias.data()[co];
        T* row = y.data() + (int64_t(b) * Cout + co) * out_hw;
        for (int64_t i = 0; i < out_hw; ++i) row[i] += bv;
      }
    }
  }

  if (rg) {
    Tape<T>::current()->record([x, weight, bias, y, cs, B, Cin, H, W, Cout, kh, kw, Ho,
                                Wo]() mutable {
      int K = Cin * kh * kw;
      int64_t out_hw = int64_t(Ho) * Wo;
      std::vector<T> col(size_t(K) * out_hw);
      std::vector<T> dcol;
      bool need_dx = x.requires_grad();
      bool need_dw = weight.requires_grad();
      bool need_db = bias.defined() && bias.requires_grad();
      if (need_dx) dcol.resize(size_t(K) * out_hw);
      detail::ConstMatMap<T> Wm(weight.data(), Cout, K);
      for (int b = 0; b < B; ++b) {
        detail::ConstMatMap<T> dYm(y.grad() + int64_t(b) * Cout * out_hw, Cout, out_hw);
        if (need_dw) {
          detail::im2col(x.data() + int64_t(b) * Cin * H * W, Cin, H, W, kh, kw, cs, Ho, Wo,
                         col.data());
          detail::ConstMatMap<T> Cm(col.data(), K, out_hw);
          detail::MatMap<T> dWm(weight.grad(), Cout, K);
          dWm.noalias() += dYm * Cm.transpose();
        }
        if (need_dx) {
          detail::MatMap<T> dCm(dcol.data(), K, out_hw);
          dCm.noalias() = Wm.transpose() * dYm;
          detail::col2im(dcol.data(), Cin, H, W, kh, kw, cs, Ho, Wo,
                         x.grad() + int64_t(b) * Cin * H * W);
        }
        if (need_db) {
          T* gb = bias.grad();
          for (int co = 0; co < Cout; ++co) {
            double acc = 0.0;
            const T* row = y.grad() + (int64_t(b) * Cout + co) * out_hw;
            for (int64_t i = 0; i < out_hw; ++i) acc += static_cast<double>(row[i]);
            gb[co] += static_cast<T>(acc);
          }
        }
      }
    });
  }
  return y;
}

// Depthwise convolution with one fixed (non-learnable) k x k kernel shared by
// all channels, reflective padding, stride 1. Gradients flow to the input
// only; the kernel never receives updates.
template <typename T>
Tensor<T> fixed_depthwise(const Tensor<T>& x, const std::vector<T>& kernel, int k) {
  detail::require_rank4(x, "fixed_depthwise");
  if (k < 1 || k % 2 == 0) throw ValidationError("fixed_depthwise: kernel size must be odd");
  if (static_cast<int>(kernel.size()) != k * k)
    throw ValidationError("fixed_depthwise: kernel length mismatch");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int p = k / 2;
  bool rg = grad_needed(x);
  Tensor<T> y(x.shape(), rg);
  int64_t HW = int64_t(H) * W;
  for (int bc = 0; bc < B * C; ++bc) {
    const T* xc = x.data() + bc * HW;
    T* yc = y.data() + bc * HW;
    for (int oh = 0; oh < H; ++oh) {
      for (int ow = 0; ow < W; ++ow) {
        T acc = T(0);
        for (int ki = 0; ki < k; ++ki) {
          int ih = detail::reflect_index(oh - p + ki, H);
          for (int kj = 0; kj < k; ++kj) {
            int iw = detail::reflect_index(ow - p + kj, W);
            acc += kernel[ki * k + kj] * xc[int64_t(ih) * W + iw];
          }
        }
        yc[int64_t(oh) * W + ow] = acc;
      }
    }
  }
  if (rg) {
    Tape<T>::current()->record([x, y, kernel, k, B, C, H, W]() mutable {
      int p = k / 2;
      int64_t HW = int64_t(H) * W;
      T* gx = x.grad();
      const T* gy = y.grad();
      for (int bc = 0; bc < B * C; ++bc) {
        const T* gyc = gy + bc * HW;
        T* gxc = gx + bc * HW;
        for (int oh = 0; oh < H; ++oh) {
          for (int ow = 0; ow < W; ++ow) {
            T g = gyc[int64_t(oh) * W + ow];
            for (int ki = 0; ki < k; ++ki) {
              int ih = detail::reflect_index(oh - p + ki, H);
              for (int kj = 0; kj < k; ++kj) {
                int iw = detail::reflect_index(ow - p + kj, W);
                gxc[int64_t(ih) * W + iw] += kernel[ki * k + kj] * g;
              }
            }
          }
        }
      }
    });
  }
  return y;
}

// sqrt(a^2 + b^2 + eps) elementwise; the eps floor keeps the gradient finite
// at the origin.
template <typename T>
Tensor<T> hypot_eps(const Tensor<T>& a, const Tensor<T>& b, T eps) {
  require_same_shape(a, b, "hypot_eps");
  bool rg = grad_needed(a) || grad_needed(b);
  Tensor<T> y(a.shape(), rg);
  for (int64_t i = 0; i < y.size(); ++i) {
    T av = a.data()[i], bv = b.data()[i];
    y.data()[i] = std::sqrt(av * av + bv * bv + eps);
  }
  if (rg) {
    Tape<T>::current()->record([a, b, y]() mutable {
      const T* g = y.grad();
      const T* py = y.data();
      T* ga = a.requires_grad() ? a.grad() : nullptr;
      T* gb = b.requires_grad() ? b.grad() : nullptr;
      for (int64_t i = 0; i < y.size(); ++i) {
        if (ga) ga[i] += g[i] * a.data()[i] / py[i];
        if (gb) gb[i] += g[i] * b.data()[i] / py[i];
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Batch normalization
// ---------------------------------------------------------------------------

// Training mode normalizes with batch statistics and updates the running
// buffers in place; eval mode uses the running statistics.
template <typename T>
Tensor<T> batch_norm(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                     Tensor<T>& running_mean, Tensor<T>& running_var, bool training,
                     T momentum = T(0.1), T eps = T(1e-5)) {
  detail::require_rank4(x, "batch_norm");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (gamma.size() != C || beta.size() != C || running_mean.size() != C ||
      running_var.size() != C)
    throw ValidationError("batch_norm: parameter size mismatch");
  int64_t HW = int64_t(H) * W;
  int64_t N = int64_t(B) * HW;

  std::vector<T> mean(C), invstd(C);
  if (training) {
    for (int c = 0; c < C; ++c) {
      double sum = 0.0, sq = 0.0;
      for (int b = 0; b < B; ++b) {
        const T* p = x.data() + (int64_t(b) * C + c) * HW;
        for (int64_t i = 0; i < HW; ++i) {
          double v = static_cast<double>(p[i]);
          sum += v;
          sq += v * v;
        }
      }
      double m = sum / double(N);
      double var = sq / double(N) - m * m;
      if (var < 0.0) var = 0.0;
      mean[c] = static_cast<T>(m);
      invstd[c] = static_cast<T>(1.0 / std::sqrt(var + double(eps)));
      double var_unbiased = N > 1 ? var * double(N) / double(N - 1) : var;
      running_mean.data()[c] =
          static_cast<T>((1.0 - double(momentum)) * running_mean.data()[c] + double(momentum) * m);
      running_var.data()[c] = static_cast<T>((1.0 - double(momentum)) * running_var.data()[c] +
                                             double(momentum) * var_unbiased);
    }
  } else {
    for (int c = 0; c < C; ++c) {
      mean[c] = running_mean.data()[c];
      invstd[c] = static_cast<T>(1.0 / std::sqrt(double(running_var.data()[c]) + double(eps)));
    }
  }

  bool rg = grad_needed(x) || grad_needed(gamma) || grad_needed(beta);
  Tensor<T> y(x.shape(), rg);
  for (int b = 0; b < B; ++b) {
    for (int c = 0; c < C; ++c) {
      const T* px = x.data() + (int64_t(b) * C + c) * HW;
      T* py = y.data() + (int64_t(b) * C + c) * HW;
      T g = gamma.data()[c], bt = beta.data()[c], m = mean[c], is = invstd[c];
      for (int64_t i = 0; i < HW; ++i) py[i] = g * (px[i] - m) * is + bt;
    }
  }

  if (rg) {
    Tape<T>::current()->record([x, gamma, beta, y, mean, invstd, training, B, C, HW,
                                N]() mutable {
      const T* gy = y.grad();
      for (int c = 0; c < C; ++c) {
        T m = mean[c], is = invstd[c], g = gamma.data()[c];
        double sum_dy = 0.0, sum_dy_xhat = 0.0;
        for (int b = 0; b < B; ++b) {
          const T* px = x.data() + (int64_t(b) * C + c) * HW;
          const T* pg = gy + (int64_t(b) * C + c) * HW;
          for (int64_t i = 0; i < HW; ++i) {
            double xhat = double(px[i] - m) * double(is);
            sum_dy += double(pg[i]);
            sum_dy_xhat += double(pg[i]) * xhat;
          }
        }
        if (gamma.requires_grad()) gamma.grad()[c] += static_cast<T>(sum_dy_xhat);
        if (beta.requires_grad()) beta.grad()[c] += static_cast<T>(sum_dy);
        if (x.requires_grad()) {
          T* gx = x.grad();
          double mean_dy = sum_dy / double(N);
          double mean_dy_xhat = sum_dy_xhat / double(N);
          for (int b = 0; b < B; ++b) {
            const T* px = x.data() + (int64_t(b) * C + c) * HW;
            const T* pg = gy + (int64_t(b) * C + c) * HW;
            T* pgx = gx + (int64_t(b) * C + c) * HW;
            for (int64_t i = 0; i < HW; ++i) {
              double xhat = double(px[i] - m) * double(is);
              double d = training
                             ? double(g) * double(is) *
                                   (double(pg[i]) - mean_dy - xhat * mean_dy_xhat)
                             : double(g) * double(is) * double(pg[i]);
              pgx[i] += static_cast<T>(d);
            }
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Pooling and resampling
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> max_pool2d(const Tensor<T>& x, int k, int stride, int pad) {
  detail::require_rank4(x, "max_pool2d");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Ho = (H + 2 * pad - k) / stride + 1;
  int Wo = (W + 2 * pad - k) / stride + 1;
  if (Ho <= 0 || Wo <= 0) throw ValidationError("max_pool2d: output would be empty");
  bool rg = grad_needed(x);
  Tensor<T> y(Shape{B, C, Ho, Wo}, rg);
  auto argmax = std::make_shared<std::vector<int32_t>>(size_t(B) * C * Ho * Wo);
  int64_t HW = int64_t(H) * W;
  int64_t out_hw = int64_t(Ho) * Wo;
  for (int bc = 0; bc < B * C; ++bc) {
    const T* xc = x.data() + bc * HW;
    T* yc = y.data() + bc * out_hw;
    int32_t* am = argmax->data() + bc * out_hw;
    for (int oh = 0; oh < Ho; ++oh) {
      for (int ow = 0; ow < Wo; ++ow) {
        T best = T(0);
        int32_t bi = -1;
        for (int ki = 0; ki < k; ++ki) {
          int ih = oh * stride - pad + ki;
          if (ih < 0 || ih >= H) continue;
          for (int kj = 0; kj < k; ++kj) {
            int iw = ow * stride - pad + kj;
            if (iw < 0 || iw >= W) continue;
            T v = xc[int64_t(ih) * W + iw];
            if (bi < 0 || v > best) {
              best = v;
              bi = static_cast<int32_t>(ih * W + iw);
            }
          }
        }
        yc[int64_t(oh) * Wo + ow] = bi < 0 ? T(0) : best;
        am[int64_t(oh) * Wo + ow] = bi;
      }
    }
  }
  if (rg) {
    Tape<T>::current()->record([x, y, argmax, B, C, HW, out_hw]() mutable {
      const T* gy = y.grad();
      T* gx = x.grad();
      for (int bc = 0; bc < B * C; ++bc) {
        const int32_t* am = argmax->data() + bc * out_hw;
        const T* gyc = gy + bc * out_hw;
        T* gxc = gx + bc * HW;
        for (int64_t i = 0; i < out_hw; ++i)
          if (am[i] >= 0) gxc[am[i]] += gyc[i];
      }
    });
  }
  return y;
}

// Bilinear resize, align_corners=false. Source coordinates are clamped into
// the valid range before interpolation.
template <typename T>
Tensor<T> upsample_bilinear(const Tensor<T>& x, int Ho, int Wo) {
  detail::require_rank4(x, "upsample_bilinear");
  int B = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  if (Ho < 1 || Wo < 1) throw ValidationError("upsample_bilinear: bad target size");
  bool rg = grad_needed(x);
  Tensor<T> y(Shape{B, C, Ho, Wo}, rg);

  struct Tap {
    int i0, i1;
    T w1;  // weight of i1; weight of i0 is 1-w1
  };
  auto make_taps = [](int in, int out) {
    std::vector<Tap> taps(out);
    double scale = double(in) / double(out);
    for (int o = 0; o < out; ++o) {
      double src = (o + 0.5) * scale - 0.5;
      if (src < 0.0) src = 0.0;
      if (src > in - 1) src = in - 1;
      int i0 = static_cast<int>(std::floor(src));
      if (i0 > in - 1) i0 = in - 1;
      int i1 = std::min(i0 + 1, in - 1);
      taps[o] = Tap{i0, i1, static_cast<T>(src - i0)};
    }
    return taps;
  };
  auto hy = std::make_shared<std::vector<Tap>>(make_taps(H, Ho));
  auto wx = std::make_shared<std::vector<Tap>>(make_taps(W, Wo));

  int64_t HW = int64_t(H) * W;
  int64_t out_hw = int64_t(Ho) * Wo;
  for (int bc = 0; bc < B * C; ++bc) {
    const T* xc = x.data() + bc * HW;
    T* yc = y.data() + bc * out_hw;
    for (int oh = 0; oh < Ho; ++oh) {
      const Tap& th = (*hy)[oh];
      for (int ow = 0; ow < Wo; ++ow) {
        const Tap& tw = (*wx)[ow];
        T v00 = xc[int64_t(th.i0) * W + tw.i0];
        T v01 = xc[int64_t(th.i0) * W + tw.i1];
        T v10 = xc[int64_t(th.i1) * W + tw.i0];
        T v11 = xc[int64_t(th.i1) * W + tw.i1];
        T top = v00 + (v01 - v00) * tw.w1;
        T bot = v10 + (v11 - v10) * tw.w1;
        yc[int64_t(oh) * Wo + ow] = top + (bot - top) * th.w1;
      }
    }
  }
  if (rg) {
    Tape<T>::current()->record([x, y, hy, wx, B, C, H, W, Ho, Wo]() mutable {
      int64_t HW = int64_t(H) * W;
      int64_t out_hw = int64_t(Ho) * Wo;
      const T* gy = y.grad();
      T* gx = x.grad();
      for (int bc = 0; bc < B * C; ++bc) {
        const T* gyc = gy + bc * out_hw;
        T* gxc = gx + bc * HW;
        for (int oh = 0; oh < Ho; ++oh) {
          const auto& th = (*hy)[oh];
          for (int ow = 0; ow < Wo; ++ow) {
            const auto& tw = (*wx)[ow];
            T g = gyc[int64_t(oh) * Wo + ow];
            T wh1 = th.w1, wh0 = T(1) - th.w1;
            T ww1 = tw.w1, ww0 = T(1) - tw.w1;
            gxc[int64_t(th.i0) * W + tw.i0] += g * wh0 * ww0;
            gxc[int64_t(th.i0) * W + tw.i1] += g * wh0 * ww1;
            gxc[int64_t(th.i1) * W + tw.i0] += g * wh1 * ww0;
            gxc[int64_t(th.i1) * W + tw.i1] += g * wh1 * ww1;
          }
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Channel attention pieces
// ---------------------------------------------------------------------------

template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
  detail::require_rank4(x, "global_avg_pool");
  int B = x.dim(0), C = x.dim(1);
  int64_t HW = int64_t(x.dim(2)) * x.dim(3);
  bool rg = grad_needed(x);
  Tensor<T> y(Shape{B, C}, rg);
  for (int bc = 0; bc < B * C; ++bc) {
    double acc = 0.0;
    const T* p = x.data() + bc * HW;
    for (int64_t i = 0; i < HW; ++i) acc += static_cast<double>(p[i]);
    y.data()[bc] = static_cast<T>(acc / double(HW));
  }
  if (rg) {
    Tape<T>::current()->record([x, y, B, C, HW]() mutable {
      const T* gy = y.grad();
      T* gx = x.grad();
      for (int bc = 0; bc < B * C; ++bc) {
        T g = gy[bc] / static_cast<T>(HW);
        T* p = gx + bc * HW;
        for (int64_t i = 0; i < HW; ++i) p[i] += g;
      }
    });
  }
  return y;
}

// 1-D convolution sliding across the channel axis of [B, C] with a single
// k-tap filter and zero padding, as used by ECA.
template <typename T>
Tensor<T> conv1d_channels(const Tensor<T>& v, const Tensor<T>& weight) {
  if (v.ndim() != 2) throw ValidationError("conv1d_channels: expected [B, C] input");
  int B = v.dim(0), C = v.dim(1);
  int k = static_cast<int>(weight.size());
  if (k % 2 == 0) throw ValidationError("conv1d_channels: kernel size must be odd");
  int p = k / 2;
  bool rg = grad_needed(v) || grad_needed(weight);
  Tensor<T> y(Shape{B, C}, rg);
  for (int b = 0; b < B; ++b) {
    const T* row = v.data() + int64_t(b) * C;
    T* out = y.data() + int64_t(b) * C;
    for (int c = 0; c < C; ++c) {
      T acc = T(0);
      for (int j = 0; j < k; ++j) {
        int s = c + j - p;
        if (s >= 0 && s < C) acc += weight.data()[j] * row[s];
      }
      out[c] = acc;
    }
  }
  if (rg) {
    Tape<T>::current()->record([v, weight, y, B, C, k, p]() mutable {
      const T* gy = y.grad();
      for (int b = 0; b < B; ++b) {
        const T* row = v.data() + int64_t(b) * C;
        const T* gyr = gy + int64_t(b) * C;
        for (int c = 0; c < C; ++c) {
          for (int j = 0; j < k; ++j) {
            int s = c + j - p;
            if (s < 0 || s >= C) continue;
            if (weight.requires_grad()) weight.grad()[j] += gyr[c] * row[s];
            if (v.requires_grad()) v.grad()[int64_t(b) * C + s] += gyr[c] * weight.data()[j];
          }
        }
      }
    });
  }
  return y;
}

// y[b,c,h,w] = x[b,c,h,w] * s[b,c]
template <typename T>
Tensor<T> channel_scale(const Tensor<T>& x, const Tensor<T>& s) {
  detail::require_rank4(x, "channel_scale");
  if (s.ndim() != 2 || s.dim(0) != x.dim(0) || s.dim(1) != x.dim(1))
    throw ValidationError("channel_scale: scale must be [B, C]");
  int B = x.dim(0), C = x.dim(1);
  int64_t HW = int64_t(x.dim(2)) * x.dim(3);
  bool rg = grad_needed(x) || grad_needed(s);
  Tensor<T> y(x.shape(), rg);
  for (int bc = 0; bc < B * C; ++bc) {
    T sv = s.data()[bc];
    const T* px = x.data() + bc * HW;
    T* py = y.data() + bc * HW;
    for (int64_t i = 0; i < HW; ++i) py[i] = px[i] * sv;
  }
  if (rg) {
    Tape<T>::current()->record([x, s, y, B, C, HW]() mutable {
      const T* gy = y.grad();
      for (int bc = 0; bc < B * C; ++bc) {
        const T* gyc = gy + bc * HW;
        if (x.requires_grad()) {
          T sv = s.data()[bc];
          T* gx = x.grad() + bc * HW;
          for (int64_t i = 0; i < HW; ++i) gx[i] += gyc[i] * sv;
        }
        if (s.requires_grad()) {
          const T* px = x.data() + bc * HW;
          double acc = 0.0;
          for (int64_t i = 0; i < HW; ++i) acc += static_cast<double>(gyc[i] * px[i]);
          s.grad()[bc] += static_cast<T>(acc);
        }
      }
    });
  }
  return y;
}

// Concatenates (first, second) per batch item with the pair ordered by
// descending activation sum; ties keep the as-given order. Makes the change
// head invariant to swapping the two timestamps.
template <typename T>
Tensor<T> canonical_pair_concat(const Tensor<T>& fwd, const Tensor<T>& bwd, bool canonical) {
  require_same_shape(fwd, bwd, "canonical_pair_concat");
  detail::require_rank4(fwd, "canonical_pair_concat");
  int B = fwd.dim(0), C = fwd.dim(1), H = fwd.dim(2), W = fwd.dim(3);
  int64_t CHW = int64_t(C) * H * W;
  auto swap = std::make_shared<std::vector<char>>(B, 0);
  if (canonical) {
    for (int b = 0; b < B; ++b) {
      double sf = 0.0, sb = 0.0;
      const T* pf = fwd.data() + b * CHW;
      const T* pb = bwd.data() + b * CHW;
      for (int64_t i = 0; i < CHW; ++i) {
        sf += static_cast<double>(pf[i]);
        sb += static_cast<double>(pb[i]);
      }
      (*swap)[b] = sb > sf ? 1 : 0;
    }
  }
  bool rg = grad_needed(fwd) || grad_needed(bwd);
  Tensor<T> y(Shape{B, 2 * C, H, W}, rg);
  for (int b = 0; b < B; ++b) {
    const T* first = ((*swap)[b] ? bwd.data() : fwd.data()) + b * CHW;
    const T* second = ((*swap)[b] ? fwd.data() : bwd.data()) + b * CHW;
    T* out = y.data() + int64_t(b) * 2 * CHW;
    std::copy(first, first + CHW, out);
    std::copy(second, second + CHW, out + CHW);
  }
  if (rg) {
    Tape<T>::current()->record([fwd, bwd, y, swap, B, CHW]() mutable {
      const T* gy = y.grad();
      for (int b = 0; b < B; ++b) {
        const Tensor<T>& first = (*swap)[b] ? bwd : fwd;
        const Tensor<T>& second = (*swap)[b] ? fwd : bwd;
        const T* g = gy + int64_t(b) * 2 * CHW;
        if (first.requires_grad()) {
          T* gf = first.grad() + b * CHW;
          for (int64_t i = 0; i < CHW; ++i) gf[i] += g[i];
        }
        if (second.requires_grad()) {
          T* gs = second.grad() + b * CHW;
          for (int64_t i = 0; i < CHW; ++i) gs[i] += g[CHW + i];
        }
      }
    });
  }
  return y;
}

// ---------------------------------------------------------------------------
// Losses
// ---------------------------------------------------------------------------

// Mean cross-entropy over pixels whose label differs from ignore_class.
// labels is a flat [B*H*W] class-index array.
template <typename T>
Tensor<T> softmax_ce_masked(const Tensor<T>& logits, const std::vector<int>& labels,
                            int ignore_class = 0) {
  detail::require_rank4(logits, "softmax_ce_masked");
  int B = logits.dim(0), C = logits.dim(1), H = logits.dim(2), W = logits.dim(3);
  int64_t HW = int64_t(H) * W;
  if (static_cast<int64_t>(labels.size()) != int64_t(B) * HW)
    throw ValidationError("softmax_ce_masked: label count mismatch");
  for (int lab : labels)
    if (lab < 0 || lab >= C)
      throw ValidationError("softmax_ce_masked: label index " + std::to_string(lab) +
                            " out of range for " + std::to_string(C) + " classes");

  auto plabels = std::make_shared<std::vector<int>>(labels);
  double total = 0.0;
  int64_t count = 0;
  for (int b = 0; b < B; ++b) {
    for (int64_t p = 0; p < HW; ++p) {
      int lab = (*plabels)[b * HW + p];
      if (lab == ignore_class) continue;
      const T* base = logits.data() + int64_t(b) * C * HW + p;
      T mx = base[0];
      for (int c = 1; c < C; ++c) mx = std::max(mx, base[int64_t(c) * HW]);
      double lse = 0.0;
      for (int c = 0; c < C; ++c) lse += std::exp(double(base[int64_t(c) * HW] - mx));
      lse = std::log(lse) + double(mx);
      total += lse - double(base[int64_t(lab) * HW]);
      ++count;
    }
  }
  bool rg = grad_needed(logits);
  Tensor<T> y(Shape{1}, rg);
  y.data()[0] = count > 0 ? static_cast<T>(total / double(count)) : T(0);
  if (rg && count > 0) {
    Tape<T>::current()->record([logits, y, plabels, ignore_class, B, C, HW, count]() mutable {
      T gout = y.grad()[0] / static_cast<T>(count);
      T* gx = logits.grad();
      for (int b = 0; b < B; ++b) {
        for (int64_t p = 0; p < HW; ++p) {
          int lab = (*plabels)[b * HW + p];
          if (lab == ignore_class) continue;
          const T* base = logits.data() + int64_t(b) * C * HW + p;
          T* gbase = gx + int64_t(b) * C * HW + p;
          T mx = base[0];
          for (int c = 1; c < C; ++c) mx = std::max(mx, base[int64_t(c) * HW]);
          double denom = 0.0;
          for (int c = 0; c < C; ++c) denom += std::exp(double(base[int64_t(c) * HW] - mx));
          for (int c = 0; c < C; ++c) {
            double prob = std::exp(double(base[int64_t(c) * HW] - mx)) / denom;
            gbase[int64_t(c) * HW] +=
                gout * static_cast<T>(prob - (c == lab ? 1.0 : 0.0));
          }
        }
      }
    });
  }
  return y;
}

// Mean binary cross-entropy with logits; target carries no gradient.
// pos_weight scales the positive-class term.
template <typename T>
Tensor<T> bce_with_logits(const Tensor<T>& logits, const Tensor<T>& target,
                          T pos_weight = T(1)) {
  require_same_shape(logits, target, "bce_with_logits");
  int64_t N = logits.size();
  if (N == 0) throw ValidationError("bce_with_logits: empty input");
  auto softplus = [](double z) { return std::max(z, 0.0) + std::log1p(std::exp(-std::abs(z))); };
  double total = 0.0;
  for (int64_t i = 0; i < N; ++i) {
    double xv = double(logits.data()[i]);
    double yv = double(target.data()[i]);
    total += double(pos_weight) * yv * softplus(-xv) + (1.0 - yv) * softplus(xv);
  }
  bool rg = grad_needed(logits);
  Tensor<T> out(Shape{1}, rg);
  out.data()[0] = static_cast<T>(total / double(N));
  if (rg) {
    Tape<T>::current()->record([logits, target, out, pos_weight, N]() mutable {
      T g = out.grad()[0] / static_cast<T>(N);
      T* gx = logits.grad();
      for (int64_t i = 0; i < N; ++i) {
        T xv = logits.data()[i];
        T yv = target.data()[i];
        T sx = sigmoid_scalar(xv);
        gx[i] += g * ((T(1) - yv) * sx - pos_weight * yv * (T(1) - sx));
      }
    });
  }
  return out;
}

// Per-pixel cosine consistency: unchanged pixels are pulled toward cosine 1,
// changed pixels are pushed below the margin. Norms are floored at eps.
// change is a [B,1,H,W] 0/1 mask with no gradient. Empty masks contribute 0.
template <typename T>
Tensor<T> similarity_loss(const Tensor<T>& a, const Tensor<T>& b, const Tensor<T>& change,
                          T margin = T(0), T eps = T(1e-8)) {
  require_same_shape(a, b, "similarity_loss");
  detail::require_rank4(a, "similarity_loss");
  int B = a.dim(0), C = a.dim(1), H = a.dim(2), W = a.dim(3);
  if (change.ndim() != 4 || change.dim(0) != B || change.dim(1) != 1 || change.dim(2) != H ||
      change.dim(3) != W)
    throw ValidationError("similarity_loss: change mask must be [B,1,H,W]");
  int64_t HW = int64_t(H) * W;

  double sum_unchanged = 0.0, sum_changed = 0.0;
  int64_t n_unchanged = 0, n_changed = 0;
  for (int bi = 0; bi < B; ++bi) {
    const T* pa = a.data() + int64_t(bi) * C * HW;
    const T* pb = b.data() + int64_t(bi) * C * HW;
    const T* pm = change.data() + int64_t(bi) * HW;
    for (int64_t p = 0; p < HW; ++p) {
      double dot = 0.0, na2 = 0.0, nb2 = 0.0;
      for (int c = 0; c < C; ++c) {
        double av = double(pa[int64_t(c) * HW + p]);
        double bv = double(pb[int64_t(c) * HW + p]);
        dot += av * bv;
        na2 += av * av;
        nb2 += bv * bv;
      }
      double na = std::max(std::sqrt(na2), double(eps));
      double nb = std::max(std::sqrt(nb2), double(eps));
      // identical vectors have cosine exactly 1; sqrt round-trip would not
      double cs = (dot == na2 && dot == nb2 && na2 > 0.0) ? 1.0 : dot / (na * nb);
      if (pm[p] > T(0.5)) {
        sum_changed += std::max(0.0, cs - double(margin));
        ++n_changed;
      } else {
        sum_unchanged += 1.0 - cs;
        ++n_unchanged;
      }
    }
  }
  double loss = (n_unchanged ? sum_unchanged / double(n_unchanged) : 0.0) +
                (n_changed ? sum_changed / double(n_changed) : 0.0);
  bool rg = grad_needed(a) || grad_needed(b);
  Tensor<T> out(Shape{1}, rg);
  out.data()[0] = static_cast<T>(loss);
  if (rg) {
    Tape<T>::current()->record([a, b, change, out, margin, eps, B, C, HW, n_unchanged,
                                n_changed]() mutable {
      T gout = out.grad()[0];
      for (int bi = 0; bi < B; ++bi) {
        const T* pa = a.data() + int64_t(bi) * C * HW;
        const T* pb = b.data() + int64_t(bi) * C * HW;
        const T* pm = change.data() + int64_t(bi) * HW;
        T* ga = a.requires_grad() ? a.grad() + int64_t(bi) * C * HW : nullptr;
        T* gb = b.requires_grad() ? b.grad() + int64_t(bi) * C * HW : nullptr;
        for (int64_t p = 0; p < HW; ++p) {
          double dot = 0.0, na2 = 0.0, nb2 = 0.0;
          for (int c = 0; c < C; ++c) {
            double av = double(pa[int64_t(c) * HW + p]);
            double bv = double(pb[int64_t(c) * HW + p]);
            dot += av * bv;
            na2 += av * av;
            nb2 += bv * bv;
          }
          double na_raw = std::sqrt(na2), nb_raw = std::sqrt(nb2);
          double na = std::max(na_raw, double(eps));
          double nb = std::max(nb_raw, double(eps));
          double cs = (dot == na2 && dot == nb2 && na2 > 0.0) ? 1.0 : dot / (na * nb);
          double dcos;
          if (pm[p] > T(0.5)) {
            if (!(cs > double(margin))) continue;
            dcos = double(gout) / double(n_changed);
          } else {
            dcos = -double(gout) / double(n_unchanged);
          }
          for (int c = 0; c < C; ++c) {
            double av = double(pa[int64_t(c) * HW + p]);
            double bv = double(pb[int64_t(c) * HW + p]);
            if (ga) {
              double d = bv / (na * nb) - (na_raw >= double(eps) ? cs * av / (na * na) : 0.0);
              ga[int64_t(c) * HW + p] += static_cast<T>(dcos * d);
            }
            if (gb) {
              double d = av / (na * nb) - (nb_raw >= double(eps) ? cs * bv / (nb * nb) : 0.0);
              gb[int64_t(c) * HW + p] += static_cast<T>(dcos * d);
            }
          }
        }
      }
    });
  }
  return out;
}

// ---------------------------------------------------------------------------
// Inference-only helpers
// ---------------------------------------------------------------------------

// Per-pixel argmax over channels; ties resolve to the lowest class index.
template <typename T>
std::vector<int> argmax_channels(const Tensor<T>& x) {
  detail::require_rank4(x, "argmax_channels");
  int B = x.dim(0), C = x.dim(1);
  int64_t HW = int64_t(x.dim(2)) * x.dim(3);
  std::vector<int> out(size_t(B) * HW);
  for (int b = 0; b < B; ++b) {
    const T* base = x.data() + int64_t(b) * C * HW;
    for (int64_t p = 0; p < HW; ++p) {
      int best = 0;
      T bv = base[p];
      for (int c = 1; c < C; ++c) {
        T v = base[int64_t(c) * HW + p];
        if (v > bv) {
          bv = v;
          best = c;
        }
      }
      out[size_t(b) * HW + p] = best;
    }
  }
  return out;
}

}  // namespace dbtanet
