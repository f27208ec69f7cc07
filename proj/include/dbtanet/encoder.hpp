#pragma once

#include <array>
#include <memory>

#include "dbtanet/core/nn.hpp"
#include "dbtanet/core/ops.hpp"

namespace dbtanet {

// Per-timestamp feature bundle: shallow maps at stride 4, deep maps at
// stride 16, from the trainable local branch and the frozen prior branch.
// The sam_* members are undefined when the prior branch is disabled.
template <typename T>
struct EncoderFeatures {
  Tensor<T> res_shallow;
  Tensor<T> res_deep;
  Tensor<T> sam_shallow;
  Tensor<T> sam_deep;
};

template <typename T>
inline void check_encoder_input(const Tensor<T>& image) {
  if (image.ndim() != 4 || image.dim(1) != 3)
    throw ValidationError("encoder: expected [B,3,H,W] image, got " + shape_str(image.shape()));
  if (image.dim(2) % 16 != 0 || image.dim(3) % 16 != 0)
    throw ValidationError("encoder: H and W must be divisible by 16, got " +
                          std::to_string(image.dim(2)) + "x" + std::to_string(image.dim(3)));
}

// Reduced ResNet34-style trunk: 7x7 stem + max pool (stride 4), then four
// basic-block stages at widths {C_s, min(2*C_s, C_d), C_d, C_d}. Shallow
// features tap stage 1 (stride 4), deep features tap stage 4 (stride 16).
template <typename T>
class LocalBranch : public nn::Module<T> {
 public:
  LocalBranch(int shallow_ch, int deep_ch, const std::array<int, 4>& depths, Rng& rng)
      : stem(3, std::max(shallow_ch / 2, 8), 7, rng, 2, 3),
        stage1(std::max(shallow_ch / 2, 8), shallow_ch, depths[0], rng, 1),
        stage2(shallow_ch, std::min(2 * shallow_ch, deep_ch), depths[1], rng, 2),
        stage3(std::min(2 * shallow_ch, deep_ch), deep_ch, depths[2], rng, 2),
        stage4(deep_ch, deep_ch, depths[3], rng, 1) {
    this->register_module("stem", stem);
    this->register_module("stage1", stage1);
    this->register_module("stage2", stage2);
    this->register_module("stage3", stage3);
    this->register_module("stage4", stage4);
  }

  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& image) {
    check_encoder_input(image);
    Tensor<T> x = stem.forward(image);
    x = max_pool2d(x, 3, 2, 1);
    Tensor<T> shallow = stage1.forward(x);
    Tensor<T> deep = stage4.forward(stage3.forward(stage2.forward(shallow)));
    return {shallow, deep};
  }

  nn::ConvBnRelu<T> stem;
  nn::ResStage<T> stage1, stage2, stage3, stage4;
};

// Frozen global-prior encoder with the same (stride 4, stride 16) interface.
// Plain conv+ReLU stacks, seeded random weights, never trained; weights may
// optionally be replaced from a checkpoint-format file.
template <typename T>
class PriorBranch : public nn::Module<T> {
 public:
  PriorBranch(int shallow_ch, int deep_ch, uint64_t seed) : rng_(seed) {
    int stem_ch = std::max(shallow_ch / 2, 8);
    int mid_ch = std::min(2 * shallow_ch, deep_ch);
    stem = std::make_unique<nn::Conv2d<T>>(3, stem_ch, 7, rng_, 2, 3);
    to_shallow = std::make_unique<nn::Conv2d<T>>(stem_ch, shallow_ch, 3, rng_, 2, 1);
    shallow_head = std::make_unique<nn::Conv2d<T>>(shallow_ch, shallow_ch, 3, rng_, 1, 1);
    down1 = std::make_unique<nn::Conv2d<T>>(shallow_ch, mid_ch, 3, rng_, 2, 1);
    down2 = std::make_unique<nn::Conv2d<T>>(mid_ch, deep_ch, 3, rng_, 2, 1);
    neck = std::make_unique<nn::Conv2d<T>>(deep_ch, deep_ch, 1, rng_);
    this->register_module("stem", *stem);
    this->register_module("to_shallow", *to_shallow);
    this->register_module("shallow_head", *shallow_head);
    this->register_module("down1", *down1);
    this->register_module("down2", *down2);
    this->register_module("neck", *neck);
    this->freeze();
  }

  std::pair<Tensor<T>, Tensor<T>> forward(const Tensor<T>& image) {
    check_encoder_input(image);
    Tensor<T> x = relu(stem->forward(image));
    x = relu(to_shallow->forward(x));
    Tensor<T> shallow = shallow_head->forward(x);
    Tensor<T> d = relu(down1->forward(relu(shallow)));
    d = relu(down2->forward(d));
    Tensor<T> deep = neck->forward(d);
    return {shallow, deep};
  }

  std::unique_ptr<nn::Conv2d<T>> stem, to_shallow, shallow_head, down1, down2, neck;

 private:
  Rng rng_;
};

// Applies both branches to both timestamps with one shared parameter set.
template <typename T>
class SiameseEncoder : public nn::Module<T> {
 public:
  SiameseEncoder(int shallow_ch, int deep_ch, const std::array<int, 4>& depths, Rng& rng,
                 bool use_prior, uint64_t prior_seed)
      : local(shallow_ch, deep_ch, depths, rng) {
    this->register_module("local", local);
    if (use_prior) {
      prior = std::make_unique<PriorBranch<T>>(shallow_ch, deep_ch, prior_seed);
      this->register_module("prior", *prior);
    }
  }

  EncoderFeatures<T> encode_one(const Tensor<T>& image) {
    EncoderFeatures<T> f;
    auto [rs, rd] = local.forward(image);
    f.res_shallow = rs;
    f.res_deep = rd;
    if (prior) {
      auto [ss, sd] = prior->forward(image);
      f.sam_shallow = ss;
      f.sam_deep = sd;
    }
    return f;
  }

  std::pair<EncoderFeatures<T>, EncoderFeatures<T>> encode(const Tensor<T>& image_t1,
                                                           const Tensor<T>& image_t2) {
    require_same_shape(image_t1, image_t2, "siamese_encode");
    return {encode_one(image_t1), encode_one(image_t2)};
  }

  LocalBranch<T> local;
  std::unique_ptr<PriorBranch<T>> prior;
};

}  // namespace dbtanet
