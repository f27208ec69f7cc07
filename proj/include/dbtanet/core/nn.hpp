#pragma once

#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "dbtanet/core/ops.hpp"
#include "dbtanet/core/tensor.hpp"

namespace dbtanet {
namespace nn {

template <typename T>
struct NamedTensor {
  std::string name;
  Tensor<T> tensor;
  bool is_param;  // false for buffers (running statistics)
};

// Minimal module base: named parameters/buffers, child modules, a training
// flag, and recursive freezing. Registration order defines serialization
// order, so construction must be deterministic.
template <typename T>
class Module {
 public:
  Module() = default;
  virtual ~Module() = default;
  Module(const Module&) = delete;
  Module& operator=(const Module&) = delete;

  void register_param(const std::string& name, Tensor<T>& t) {
    t.set_requires_grad(true);
    params_.push_back({name, &t});
  }
  void register_buffer(const std::string& name, Tensor<T>& t) { buffers_.push_back({name, &t}); }
  void register_module(const std::string& name, Module<T>& m) { children_.push_back({name, &m}); }

  void set_training(bool on) {
    training_ = on;
    for (auto& [n, c] : children_) c->set_training(on);
  }
  bool training() const { return training_; }

  // Removes every parameter in this subtree from gradient tracking.
  void freeze() {
    for (auto& [n, p] : params_) p->set_requires_grad(false);
    for (auto& [n, c] : children_) c->freeze();
  }

  void collect(const std::string& prefix, std::vector<NamedTensor<T>>& out) const {
    for (const auto& [n, p] : params_) out.push_back({prefix + n, *p, true});
    for (const auto& [n, b] : buffers_) out.push_back({prefix + n, *b, false});
    for (const auto& [n, c] : children_) c->collect(prefix + n + ".", out);
  }

  std::vector<NamedTensor<T>> named_state(const std::string& prefix = "") const {
    std::vector<NamedTensor<T>> out;
    collect(prefix, out);
    return out;
  }

  std::vector<Tensor<T>> trainable_parameters() const {
    std::vector<Tensor<T>> out;
    for (const auto& nt : named_state())
      if (nt.is_param && nt.tensor.requires_grad()) out.push_back(nt.tensor);
    return out;
  }

  int64_t num_parameters(bool trainable_only = false) const {
    int64_t n = 0;
    for (const auto& nt : named_state())
      if (nt.is_param && (!trainable_only || nt.tensor.requires_grad())) n += nt.tensor.size();
    return n;
  }

  // FNV-1a over raw parameter bytes in registration order.
  uint64_t checksum() const {
    uint64_t h = 1469598103934665603ull;
    for (const auto& nt : named_state()) {
      h = fnv1a(nt.name.data(), nt.name.size(), h);
      h = fnv1a(nt.tensor.data(), sizeof(T) * static_cast<size_t>(nt.tensor.size()), h);
    }
    return h;
  }

 protected:
  bool training_ = true;

 private:
  std::vector<std::pair<std::string, Tensor<T>*>> params_;
  std::vector<std::pair<std::string, Tensor<T>*>> buffers_;
  std::vector<std::pair<std::string, Module<T>*>> children_;
};

template <typename T>
class Conv2d : public Module<T> {
 public:
  Conv2d(int in_ch, int out_ch, int k, Rng& rng, int stride = 1, int pad = 0, int dilation = 1,
         PadMode pad_mode = PadMode::Zero, bool with_bias = true)
      : weight(Shape{out_ch, in_ch, k, k}), spec_{stride, pad, dilation, pad_mode} {
    double stddev = std::sqrt(2.0 / (double(in_ch) * k * k));
    fill_normal(weight, rng, 0.0, stddev);
    this->register_param("weight", weight);
    if (with_bias) {
      bias = Tensor<T>(Shape{out_ch});
      this->register_param("bias", bias);
    }
  }

  Tensor<T> forward(const Tensor<T>& x) { return conv2d(x, weight, bias, spec_); }

  Tensor<T> weight;
  Tensor<T> bias;  // undefined when bias disabled

 private:
  ConvSpec spec_;
};

template <typename T>
class BatchNorm2d : public Module<T> {
 public:
  explicit BatchNorm2d(int channels)
      : gamma(Tensor<T>::full(Shape{channels}, T(1))),
        beta(Shape{channels}),
        running_mean(Shape{channels}),
        running_var(Tensor<T>::full(Shape{channels}, T(1))) {
    this->register_param("gamma", gamma);
    this->register_param("beta", beta);
    this->register_buffer("running_mean", running_mean);
    this->register_buffer("running_var", running_var);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    return batch_norm(x, gamma, beta, running_mean, running_var, this->training());
  }

  Tensor<T> gamma, beta, running_mean, running_var;
};

template <typename T>
class ConvBnRelu : public Module<T> {
 public:
  ConvBnRelu(int in_ch, int out_ch, int k, Rng& rng, int stride = 1, int pad = -1)
      : conv(in_ch, out_ch, k, rng, stride, pad < 0 ? k / 2 : pad, 1, PadMode::Zero, false),
        bn(out_ch) {
    this->register_module("conv", conv);
    this->register_module("bn", bn);
  }

  Tensor<T> forward(const Tensor<T>& x) { return relu(bn.forward(conv.forward(x))); }

  Conv2d<T> conv;
  BatchNorm2d<T> bn;
};

// Two 3x3 conv-BN pairs with an identity (or projected) skip connection.
template <typename T>
class BasicBlock : public Module<T> {
 public:
  BasicBlock(int in_ch, int out_ch, Rng& rng, int stride = 1)
      : conv1(in_ch, out_ch, 3, rng, stride, 1, 1, PadMode::Zero, false),
        conv2(out_ch, out_ch, 3, rng, 1, 1, 1, PadMode::Zero, false),
        bn1(out_ch),
        bn2(out_ch) {
    this->register_module("conv1", conv1);
    this->register_module("bn1", bn1);
    this->register_module("conv2", conv2);
    this->register_module("bn2", bn2);
    if (stride != 1 || in_ch != out_ch) {
      down_conv = std::make_unique<Conv2d<T>>(in_ch, out_ch, 1, rng, stride, 0, 1, PadMode::Zero,
                                              false);
      down_bn = std::make_unique<BatchNorm2d<T>>(out_ch);
      this->register_module("down_conv", *down_conv);
      this->register_module("down_bn", *down_bn);
    }
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> out = bn2.forward(conv2.forward(relu(bn1.forward(conv1.forward(x)))));
    Tensor<T> skip = down_conv ? down_bn->forward(down_conv->forward(x)) : x;
    return relu(add(out, skip));
  }

  Conv2d<T> conv1, conv2;
  BatchNorm2d<T> bn1, bn2;
  std::unique_ptr<Conv2d<T>> down_conv;
  std::unique_ptr<BatchNorm2d<T>> down_bn;
};

// A stack of BasicBlocks; the first block carries the stride/width change.
template <typename T>
class ResStage : public Module<T> {
 public:
  ResStage(int in_ch, int out_ch, int depth, Rng& rng, int stride = 1) {
    if (depth < 1) throw ValidationError("ResStage: depth must be >= 1");
    blocks.reserve(static_cast<size_t>(depth));
    for (int i = 0; i < depth; ++i) {
      blocks.push_back(std::make_unique<BasicBlock<T>>(i == 0 ? in_ch : out_ch, out_ch, rng,
                                                       i == 0 ? stride : 1));
      this->register_module(std::to_string(i), *blocks.back());
    }
  }

  Tensor<T> forward(Tensor<T> x) {
    for (auto& b : blocks) x = b->forward(x);
    return x;
  }

  std::vector<std::unique_ptr<BasicBlock<T>>> blocks;
};

}  // namespace nn

// AdamW: adaptive moments with decoupled weight decay.
template <typename T>
class AdamW {
 public:
  AdamW(std::vector<Tensor<T>> params, T lr, T weight_decay = T(0.01), T beta1 = T(0.9),
        T beta2 = T(0.999), T eps = T(1e-8))
      : params_(std::move(params)), lr_(lr), wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {
    m_.resize(params_.size());
    v_.resize(params_.size());
    for (size_t i = 0; i < params_.size(); ++i) {
      m_[i].assign(static_cast<size_t>(params_[i].size()), T(0));
      v_[i].assign(static_cast<size_t>(params_[i].size()), T(0));
    }
  }

  void step() {
    ++t_;
    double bc1 = 1.0 - std::pow(double(b1_), double(t_));
    double bc2 = 1.0 - std::pow(double(b2_), double(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      Tensor<T>& p = params_[i];
      const T* g = p.grad();
      T* w = p.data();
      T* m = m_[i].data();
      T* v = v_[i].data();
      for (int64_t j = 0; j < p.size(); ++j) {
        m[j] = b1_ * m[j] + (T(1) - b1_) * g[j];
        v[j] = b2_ * v[j] + (T(1) - b2_) * g[j] * g[j];
        double mhat = double(m[j]) / bc1;
        double vhat = double(v[j]) / bc2;
        w[j] -= static_cast<T>(double(lr_) * (mhat / (std::sqrt(vhat) + double(eps_)) +
                                              double(wd_) * double(w[j])));
      }
    }
  }

  void zero_grad() {
    for (auto& p : params_) p.zero_grad();
  }

  size_t num_tensors() const { return params_.size(); }

  int64_t num_elements() const {
    int64_t n = 0;
    for (const auto& p : params_) n += p.size();
    return n;
  }

 private:
  std::vector<Tensor<T>> params_;
  T lr_, wd_, b1_, b2_, eps_;
  int64_t t_ = 0;
  std::vector<std::vector<T>> m_, v_;
};

}  // namespace dbtanet
