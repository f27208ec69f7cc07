#pragma once

#include <cmath>
#include <functional>
#include <vector>

#include "dbtanet/core/ops.hpp"
#include "dbtanet/core/tensor.hpp"

namespace testutil {

template <typename T>
dbtanet::Tensor<T> random_tensor(dbtanet::Shape shape, dbtanet::Rng& rng, double lo = -1.0,
                                 double hi = 1.0) {
  dbtanet::Tensor<T> t(std::move(shape));
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(rng.uniform(lo, hi));
  return t;
}

template <typename T>
double max_abs_diff(const dbtanet::Tensor<T>& a, const dbtanet::Tensor<T>& b) {
  double m = 0.0;
  for (int64_t i = 0; i < a.size(); ++i)
    m = std::max(m, std::abs(double(a.data()[i]) - double(b.data()[i])));
  return m;
}

// Central-difference gradient check. `forward` must rebuild the graph from
// the current parameter values and return a scalar loss tensor. Error is
// |analytic - fd| / max(|analytic|, |fd|, 1).
template <typename T, typename Fn>
double max_grad_err(std::vector<dbtanet::Tensor<T>> wrt, Fn forward, T h = T(1e-5)) {
  std::vector<std::vector<T>> analytic;
  {
    dbtanet::Tape<T> tape;
    dbtanet::Tensor<T> loss = forward();
    tape.backward(loss);
    for (auto& w : wrt) {
      analytic.emplace_back(w.grad(), w.grad() + w.size());
      w.zero_grad();
    }
  }
  double worst = 0.0;
  for (size_t wi = 0; wi < wrt.size(); ++wi) {
    auto& w = wrt[wi];
    for (int64_t i = 0; i < w.size(); ++i) {
      T saved = w.data()[i];
      w.data()[i] = saved + h;
      double lp = double(forward().item());
      w.data()[i] = saved - h;
      double lm = double(forward().item());
      w.data()[i] = saved;
      double fd = (lp - lm) / (2.0 * double(h));
      double an = double(analytic[wi][size_t(i)]);
      double err = std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1.0});
      worst = std::max(worst, err);
    }
  }
  return worst;
}

// Reference convolution: direct loops, no im2col, no GEMM.
template <typename T>
dbtanet::Tensor<T> naive_conv2d(const dbtanet::Tensor<T>& x, const dbtanet::Tensor<T>& w,
                                const dbtanet::Tensor<T>& bias, const dbtanet::ConvSpec& cs) {
  int B = x.dim(0), Cin = x.dim(1), H = x.dim(2), W = x.dim(3);
  int Cout = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  int Ho = (H + 2 * cs.pad - cs.dilation * (kh - 1) - 1) / cs.stride + 1;
  int Wo = (W + 2 * cs.pad - cs.dilation * (kw - 1) - 1) / cs.stride + 1;
  dbtanet::Tensor<T> y(dbtanet::Shape{B, Cout, Ho, Wo});
  auto pix = [&](int b, int c, int i, int j) -> T {
    if (i < 0 || i >= H || j < 0 || j >= W) {
      if (cs.pad_mode == dbtanet::PadMode::Zero) return T(0);
      while (i < 0 || i >= H) i = i < 0 ? -i - 1 : 2 * H - 1 - i;
      while (j < 0 || j >= W) j = j < 0 ? -j - 1 : 2 * W - 1 - j;
    }
    return x.data()[((int64_t(b) * Cin + c) * H + i) * W + j];
  };
  for (int b = 0; b < B; ++b)
    for (int co = 0; co < Cout; ++co)
      for (int oh = 0; oh < Ho; ++oh)
        for (int ow = 0; ow < Wo; ++ow) {
          double acc = bias.defined() ? double(bias.data()[co]) : 0.0;
          for (int ci = 0; ci < Cin; ++ci)
            for (int ki = 0; ki < kh; ++ki)
              for (int kj = 0; kj < kw; ++kj)
                acc += double(w.data()[((int64_t(co) * Cin + ci) * kh + ki) * kw + kj]) *
                       double(pix(b, ci, oh * cs.stride - cs.pad + ki * cs.dilation,
                                  ow * cs.stride - cs.pad + kj * cs.dilation));
          y.data()[((int64_t(b) * Cout + co) * Ho + oh) * Wo + ow] = static_cast<T>(acc);
        }
  return y;
}

}  // namespace testutil
