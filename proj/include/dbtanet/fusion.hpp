#pragma once

#include <cmath>
#include <memory>
#include <vector>

#include "dbtanet/core/nn.hpp"
#include "dbtanet/core/ops.hpp"

namespace dbtanet {

// Normalized isotropic Gaussian sampled on the integer grid around the
// kernel center.
template <typename T>
struct GaussianKernel {
  T sigma = T(1);
  int size = 3;
  std::vector<T> weights;  // size*size, sums to 1
};

template <typename T>
GaussianKernel<T> gaussian_kernel(T sigma, int size) {
  if (!(sigma > T(0))) throw ValidationError("gaussian_kernel: sigma must be positive");
  if (size < 1 || size % 2 == 0) throw ValidationError("gaussian_kernel: size must be odd and >= 1");
  GaussianKernel<T> k;
  k.sigma = sigma;
  k.size = size;
  k.weights.resize(static_cast<size_t>(size) * size);
  int r = size / 2;
  double sum = 0.0;
  for (int i = 0; i < size; ++i) {
    for (int j = 0; j < size; ++j) {
      double di = i - r, dj = j - r;
      double w = std::exp(-(di * di + dj * dj) / (2.0 * double(sigma) * double(sigma)));
      k.weights[size_t(i) * size + j] = static_cast<T>(w);
      sum += w;
    }
  }
  for (auto& w : k.weights) w = static_cast<T>(double(w) / sum);
  return k;
}

// Convex blend (1-gamma)*F_res + gamma*F_other, the fixed-weight feature
// gate. The learnable deep gate goes through scalar_gate with
// sigmoid(beta_raw) instead.
template <typename T>
Tensor<T> gate_fuse(const Tensor<T>& f_res, const Tensor<T>& f_other, T gamma) {
  if (!(gamma >= T(0) && gamma <= T(1)))
    throw ValidationError("gate_fuse: gamma must lie in [0,1]");
  require_same_shape(f_res, f_other, "gate_fuse");
  if (gamma == T(0)) return f_res;
  if (gamma == T(1)) return f_other;
  return lerp_const(f_res, f_other, gamma);
}

// Gaussian convolution block: fixed depthwise Gaussian smoothing, then a
// learnable pointwise projection with batch norm and ReLU.
template <typename T>
class Gcb : public nn::Module<T> {
 public:
  Gcb(int channels, T sigma, Rng& rng, int kernel_size = 3)
      : kernel(gaussian_kernel<T>(sigma, kernel_size)),
        pointwise(channels, channels, 1, rng, 1, 0, 1, PadMode::Zero, false),
        bn(channels) {
    this->register_module("pointwise", pointwise);
    this->register_module("bn", bn);
  }

  Tensor<T> smooth(const Tensor<T>& x) { return fixed_depthwise(x, kernel.weights, kernel.size); }

  Tensor<T> forward(const Tensor<T>& x) { return relu(bn.forward(pointwise.forward(smooth(x)))); }

  GaussianKernel<T> kernel;
  nn::Conv2d<T> pointwise;
  nn::BatchNorm2d<T> bn;
};

// Gaussian-smoothed projection over the prior branch's shallow features:
// three Gaussian conv blocks with decreasing sigma, a 1x1 projection, and a
// parallel 1x1 residual path.
template <typename T>
class Gspm : public nn::Module<T> {
 public:
  Gspm(int channels, Rng& rng, std::vector<T> sigmas = {T(1.0), T(0.8), T(0.6)},
       int kernel_size = 3)
      : project(channels, channels, 1, rng),
        residual(channels, channels, 1, rng) {
    for (size_t i = 0; i < sigmas.size(); ++i) {
      blocks.push_back(std::make_unique<Gcb<T>>(channels, sigmas[i], rng, kernel_size));
      this->register_module("gcb" + std::to_string(i), *blocks.back());
    }
    this->register_module("project", project);
    this->register_module("residual", residual);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> h = x;
    for (auto& b : blocks) h = b->forward(h);
    return add(project.forward(h), residual.forward(x));
  }

  std::vector<std::unique_ptr<Gcb<T>>> blocks;
  nn::Conv2d<T> project;
  nn::Conv2d<T> residual;
};

}  // namespace dbtanet
