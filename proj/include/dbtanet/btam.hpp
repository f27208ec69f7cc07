#pragma once

#include <cmath>
#include <memory>

#include "dbtanet/core/nn.hpp"
#include "dbtanet/core/ops.hpp"

namespace dbtanet {

// Adaptive ECA kernel size: nearest odd to log2(C)/2 + 1/2, rounding up on
// ties. C=128 -> 5, C=512 -> 5.
inline int eca_kernel_size(int channels) {
  if (channels < 1) throw ValidationError("eca_kernel_size: channels must be >= 1");
  int t = static_cast<int>(std::log2(double(channels)) / 2.0 + 0.5);
  if (t < 1) t = 1;
  return t % 2 == 1 ? t : t + 1;
}

template <typename T>
struct BidirPair {
  Tensor<T> forward;   // MSA(concat(F_t1, F_t2))
  Tensor<T> backward;  // MSA(concat(F_t2, F_t1))
};

// Multi-scale aggregation: parallel 1x1, dilated 3x3 (d=2, pad 2) and 5x5
// (pad 2) branches, concatenated and projected, plus a 1x1 residual path.
template <typename T>
class Msa : public nn::Module<T> {
 public:
  Msa(int in_ch, int out_ch, Rng& rng, int branch_ch = 0)
      : branch_ch_(branch_ch > 0 ? branch_ch : out_ch),
        point(in_ch, branch_ch_, 1, rng),
        dilated(in_ch, branch_ch_, 3, rng, 1, 2, 2),
        wide(in_ch, branch_ch_, 5, rng, 1, 2),
        fuse(3 * branch_ch_, out_ch, 1, rng),
        residual(in_ch, out_ch, 1, rng) {
    this->register_module("point", point);
    this->register_module("dilated", dilated);
    this->register_module("wide", wide);
    this->register_module("fuse", fuse);
    this->register_module("residual", residual);
  }

  Tensor<T> forward(const Tensor<T>& x) {
    Tensor<T> cat = concat_channels<T>({point.forward(x), dilated.forward(x), wide.forward(x)});
    return add(fuse.forward(cat), residual.forward(x));
  }

  int branch_ch_;
  nn::Conv2d<T> point, dilated, wide, fuse, residual;
};

// Channel attention: global average pool, k-tap 1-D convolution across the
// channel axis, sigmoid gate.
template <typename T>
class EcaAttention : public nn::Module<T> {
 public:
  EcaAttention(int channels, Rng& rng) : k_(eca_kernel_size(channels)), weight(Shape{k_}) {
    fill_normal(weight, rng, 0.0, 1.0 / std::sqrt(double(k_)));
    this->register_param("weight", weight);
  }

  Tensor<T> attention(const Tensor<T>& x) {
    return sigmoid(conv1d_channels(global_avg_pool(x), weight));
  }

  Tensor<T> forward(const Tensor<T>& x) { return channel_scale(x, attention(x)); }

  int kernel_size() const { return k_; }

  int k_;
  Tensor<T> weight;
};

// Bidirectional temporal awareness over fused deep features: one shared MSA
// applied to both temporal concatenation orders, ECA fusion of the pair,
// combination with the absolute difference, and residual refinement.
template <typename T>
class Btam : public nn::Module<T> {
 public:
  Btam(int deep_ch, int msa_ch, Rng& rng, int branch_ch = 0, bool canonical_pair = true)
      : canonical_pair_(canonical_pair),
        msa(2 * deep_ch, msa_ch, rng, branch_ch),
        eca(2 * msa_ch, rng),
        reduce(2 * msa_ch, msa_ch, 1, rng),
        combine(msa_ch + deep_ch, msa_ch, 1, rng),
        rb1(msa_ch, msa_ch, rng),
        rb2(msa_ch, msa_ch, rng) {
    this->register_module("msa", msa);
    this->register_module("eca", eca);
    this->register_module("reduce", reduce);
    this->register_module("combine", combine);
    this->register_module("rb1", rb1);
    this->register_module("rb2", rb2);
  }

  BidirPair<T> bidirectional(const Tensor<T>& f_t1, const Tensor<T>& f_t2) {
    require_same_shape(f_t1, f_t2, "bidirectional_representations");
    BidirPair<T> pair;
    pair.forward = msa.forward(concat_channels<T>({f_t1, f_t2}));
    pair.backward = msa.forward(concat_channels<T>({f_t2, f_t1}));
    return pair;
  }

  Tensor<T> eca_fuse(const BidirPair<T>& pair) {
    Tensor<T> cat = canonical_pair_concat(pair.forward, pair.backward, canonical_pair_);
    return reduce.forward(eca.forward(cat));
  }

  Tensor<T> forward(const Tensor<T>& f_t1, const Tensor<T>& f_t2) {
    require_same_shape(f_t1, f_t2, "btam_forward");
    Tensor<T> fused = eca_fuse(bidirectional(f_t1, f_t2));
    Tensor<T> diff = abs_diff(f_t1, f_t2);
    Tensor<T> h = combine.forward(concat_channels<T>({fused, diff}));
    return rb2.forward(rb1.forward(h));
  }

  bool canonical_pair_;
  Msa<T> msa;
  EcaAttention<T> eca;
  nn::Conv2d<T> reduce, combine;
  nn::BasicBlock<T> rb1, rb2;
};

// Ablation stand-in for BTAM: absolute difference followed by a 1x1
// projection to the change-feature width.
template <typename T>
class DiffChangeFeatures : public nn::Module<T> {
 public:
  DiffChangeFeatures(int deep_ch, int msa_ch, Rng& rng) : proj(deep_ch, msa_ch, 1, rng) {
    this->register_module("proj", proj);
  }

  Tensor<T> forward(const Tensor<T>& f_t1, const Tensor<T>& f_t2) {
    require_same_shape(f_t1, f_t2, "change_features");
    return proj.forward(abs_diff(f_t1, f_t2));
  }

  nn::Conv2d<T> proj;
};

}  // namespace dbtanet
