#pragma once

#include <vector>

#include "dbtanet/core/nn.hpp"
#include "dbtanet/core/ops.hpp"

namespace dbtanet {

// Sobel gradient magnitude sqrt(Gx^2 + Gy^2 + eps) on a single-channel map,
// reflective padding, fixed kernels.
template <typename T>
Tensor<T> sobel_edges(const Tensor<T>& x, T eps = T(1e-8)) {
  if (x.ndim() != 4 || x.dim(1) != 1)
    throw ValidationError("sobel_edges: expected single-channel [B,1,H,W] input, got " +
                          shape_str(x.shape()));
  static const std::vector<T> gx = {T(-1), T(0), T(1), T(-2), T(0), T(2), T(-1), T(0), T(1)};
  static const std::vector<T> gy = {T(-1), T(-2), T(-1), T(0), T(0), T(0), T(1), T(2), T(1)};
  return hypot_eps(fixed_depthwise(x, gx, 3), fixed_depthwise(x, gy, 3), eps);
}

// Shared per-timestamp semantic decoder: upsample deep features x4 to the
// shallow grid, concatenate, refine with two conv-BN-ReLU blocks, project to
// class logits and upsample x4 to input resolution. The pre-projection
// feature map is kept for task interaction and the similarity loss.
template <typename T>
class SemanticDecoder : public nn::Module<T> {
 public:
  SemanticDecoder(int shallow_ch, int deep_ch, int width, int classes, Rng& rng)
      : block1(shallow_ch + deep_ch, width, 3, rng),
        block2(width, width, 3, rng),
        proj(width, classes, 1, rng) {
    this->register_module("block1", block1);
    this->register_module("block2", block2);
    this->register_module("proj", proj);
  }

  struct Out {
    Tensor<T> feat;    // [B, width, H/4, W/4]
    Tensor<T> logits;  // [B, classes, H, W]
  };

  Out forward(const Tensor<T>& shallow, const Tensor<T>& deep, int out_h, int out_w) {
    Tensor<T> up = upsample_bilinear(deep, shallow.dim(2), shallow.dim(3));
    Tensor<T> feat = block2.forward(block1.forward(concat_channels<T>({shallow, up})));
    Tensor<T> logits = upsample_bilinear(proj.forward(feat), out_h, out_w);
    return {feat, logits};
  }

  nn::ConvBnRelu<T> block1, block2;
  nn::Conv2d<T> proj;
};

// Change decoder over BTAM output: conv-BN-ReLU refinement, 1-channel
// projection, bilinear upsample to input resolution.
template <typename T>
class ChangeDecoder : public nn::Module<T> {
 public:
  ChangeDecoder(int in_ch, int width, Rng& rng)
      : refine(in_ch, width, 3, rng), proj(width, 1, 1, rng) {
    this->register_module("refine", refine);
    this->register_module("proj", proj);
  }

  Tensor<T> forward(const Tensor<T>& x, int out_h, int out_w) {
    return upsample_bilinear(proj.forward(refine.forward(x)), out_h, out_w);
  }

  nn::ConvBnRelu<T> refine;
  nn::Conv2d<T> proj;
};

// Boundary decoder over the concatenated fused shallow features of both
// timestamps: 1-channel projection with residual Sobel enhancement.
template <typename T>
class BoundaryDecoder : public nn::Module<T> {
 public:
  BoundaryDecoder(int in_ch, Rng& rng) : proj(in_ch, 1, 1, rng) {
    this->register_module("proj", proj);
  }

  Tensor<T> forward(const Tensor<T>& x, int out_h, int out_w) {
    Tensor<T> p = proj.forward(x);
    Tensor<T> logits = add(p, sobel_edges(p));
    return upsample_bilinear(logits, out_h, out_w);
  }

  nn::Conv2d<T> proj;
};

// Additive refinement of the change logits from the absolute semantic
// feature difference.
template <typename T>
class TaskInteraction : public nn::Module<T> {
 public:
  TaskInteraction(int feat_ch, Rng& rng) : proj(feat_ch, 1, 1, rng) {
    this->register_module("proj", proj);
  }

  Tensor<T> forward(const Tensor<T>& sem1_feat, const Tensor<T>& sem2_feat,
                    const Tensor<T>& change_logits) {
    require_same_shape(sem1_feat, sem2_feat, "task_interaction");
    if (sem1_feat.dim(2) != change_logits.dim(2) || sem1_feat.dim(3) != change_logits.dim(3))
      throw ValidationError("task_interaction: feature/logit resolution mismatch");
    return add(change_logits, proj.forward(abs_diff(sem1_feat, sem2_feat)));
  }

  nn::Conv2d<T> proj;
};

}  // namespace dbtanet
