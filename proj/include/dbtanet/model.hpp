#pragma once

#include <array>
#include <cstdint>
#include <memory>

#include "dbtanet/btam.hpp"
#include "dbtanet/encoder.hpp"
#include "dbtanet/fusion.hpp"
#include "dbtanet/heads.hpp"

namespace dbtanet {

struct ModelConfig {
  int classes = 5;
  int shallow_channels = 64;
  int deep_channels = 256;
  int msa_channels = 256;
  int msa_branch_channels = 128;
  int decoder_channels = 64;
  std::array<int, 4> stage_depths{2, 2, 2, 2};
  double alpha = 0.5;  // fixed shallow gate
  bool use_sam_branch = true;
  bool use_gspm = true;
  bool use_btam = true;
  bool canonical_pair = true;
  uint64_t seed = 1;
  uint64_t sam_seed = 101;

  void validate() const {
    if (classes < 2) throw ValidationError("model: classes must be >= 2");
    if (!(alpha >= 0.0 && alpha <= 1.0)) throw ValidationError("model: alpha must lie in [0,1]");
    for (int d : stage_depths)
      if (d < 1) throw ValidationError("model: stage depths must be >= 1");
    if (shallow_channels < 1 || deep_channels < 1 || msa_channels < 1 || decoder_channels < 1)
      throw ValidationError("model: channel widths must be positive");
    if (use_gspm && !use_sam_branch)
      throw ValidationError("model: use_gspm requires use_sam_branch");
  }
};

template <typename T>
struct Predictions {
  Tensor<T> sem1_logits;      // [B, C, H, W]
  Tensor<T> sem2_logits;      // [B, C, H, W]
  Tensor<T> change_logits;    // [B, 1, H, W], after task interaction
  Tensor<T> boundary_logits;  // [B, 1, H, W]
};

template <typename T>
struct ModelOutputs {
  Predictions<T> preds;
  Tensor<T> sem1_feat;  // [B, width, H, W] pre-projection decoder features
  Tensor<T> sem2_feat;
};

// Full dual-branch change detection network. Sub-modules are toggled by the
// config flags: the prior branch (with its gates), the Gaussian projection
// over its shallow features, and the bidirectional temporal module.
template <typename T>
class DbtaNet : public nn::Module<T> {
 public:
  explicit DbtaNet(const ModelConfig& cfg) : cfg_(cfg), rng_(cfg.seed) {
    cfg.validate();
    encoder = std::make_unique<SiameseEncoder<T>>(cfg.shallow_channels, cfg.deep_channels,
                                                  cfg.stage_depths, rng_, cfg.use_sam_branch,
                                                  cfg.sam_seed);
    this->register_module("encoder", *encoder);
    if (cfg.use_sam_branch) {
      if (cfg.use_gspm) {
        gspm = std::make_unique<Gspm<T>>(cfg.shallow_channels, rng_);
        this->register_module("gspm", *gspm);
      }
      beta_raw = Tensor<T>(Shape{1});
      this->register_param("beta_raw", beta_raw);
    }
    if (cfg.use_btam) {
      btam = std::make_unique<Btam<T>>(cfg.deep_channels, cfg.msa_channels, rng_,
                                       cfg.msa_branch_channels, cfg.canonical_pair);
      this->register_module("btam", *btam);
    } else {
      diff_features =
          std::make_unique<DiffChangeFeatures<T>>(cfg.deep_channels, cfg.msa_channels, rng_);
      this->register_module("diff_features", *diff_features);
    }
    sem_decoder = std::make_unique<SemanticDecoder<T>>(
        cfg.shallow_channels, cfg.deep_channels, cfg.decoder_channels, cfg.classes, rng_);
    this->register_module("sem_decoder", *sem_decoder);
    change_decoder = std::make_unique<ChangeDecoder<T>>(cfg.msa_channels, cfg.decoder_channels,
                                                        rng_);
    this->register_module("change_decoder", *change_decoder);
    boundary_decoder = std::make_unique<BoundaryDecoder<T>>(2 * cfg.shallow_channels, rng_);
    this->register_module("boundary_decoder", *boundary_decoder);
    interaction = std::make_unique<TaskInteraction<T>>(cfg.decoder_channels, rng_);
    this->register_module("interaction", *interaction);
  }

  const ModelConfig& config() const { return cfg_; }

  // Fused shallow/deep features of one timestamp.
  std::pair<Tensor<T>, Tensor<T>> fuse(const EncoderFeatures<T>& f) {
    if (!cfg_.use_sam_branch) return {f.res_shallow, f.res_deep};
    Tensor<T> refined = cfg_.use_gspm ? gspm->forward(f.sam_shallow) : f.sam_shallow;
    Tensor<T> shallow = gate_fuse(f.res_shallow, refined, static_cast<T>(cfg_.alpha));
    Tensor<T> deep = scalar_gate(f.res_deep, f.sam_deep, sigmoid(beta_raw));
    return {shallow, deep};
  }

  Tensor<T> change_features(const Tensor<T>& deep1, const Tensor<T>& deep2) {
    return btam ? btam->forward(deep1, deep2) : diff_features->forward(deep1, deep2);
  }

  ModelOutputs<T> forward(const Tensor<T>& image_t1, const Tensor<T>& image_t2) {
    auto [f1, f2] = encoder->encode(image_t1, image_t2);
    auto [shallow1, deep1] = fuse(f1);
    auto [shallow2, deep2] = fuse(f2);
    int H = image_t1.dim(2), W = image_t1.dim(3);

    auto d1 = sem_decoder->forward(shallow1, deep1, H, W);
    auto d2 = sem_decoder->forward(shallow2, deep2, H, W);
    Tensor<T> sem1_feat = upsample_bilinear(d1.feat, H, W);
    Tensor<T> sem2_feat = upsample_bilinear(d2.feat, H, W);

    Tensor<T> change = change_decoder->forward(change_features(deep1, deep2), H, W);
    change = interaction->forward(sem1_feat, sem2_feat, change);

    Tensor<T> boundary =
        boundary_decoder->forward(concat_channels<T>({shallow1, shallow2}), H, W);

    ModelOutputs<T> out;
    out.preds = {d1.logits, d2.logits, change, boundary};
    out.sem1_feat = sem1_feat;
    out.sem2_feat = sem2_feat;
    return out;
  }

  uint64_t prior_checksum() const { return encoder->prior ? encoder->prior->checksum() : 0; }

  std::unique_ptr<SiameseEncoder<T>> encoder;
  std::unique_ptr<Gspm<T>> gspm;
  Tensor<T> beta_raw;  // DFG parameter; beta = sigmoid(beta_raw)
  std::unique_ptr<Btam<T>> btam;
  std::unique_ptr<DiffChangeFeatures<T>> diff_features;
  std::unique_ptr<SemanticDecoder<T>> sem_decoder;
  std::unique_ptr<ChangeDecoder<T>> change_decoder;
  std::unique_ptr<BoundaryDecoder<T>> boundary_decoder;
  std::unique_ptr<TaskInteraction<T>> interaction;

 private:
  ModelConfig cfg_;
  Rng rng_;
};

}  // namespace dbtanet
