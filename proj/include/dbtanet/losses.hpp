#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "dbtanet/core/grid.hpp"
#include "dbtanet/core/ops.hpp"
#include "dbtanet/model.hpp"

namespace dbtanet {

// Derives the binary boundary target from a bi-temporal label pair: the
// change mask is (label_t1 > 0) OR (label_t2 > 0); a pixel is boundary when
// the mask differs from at least one 4-neighbor. Out-of-image neighbors
// replicate the edge, so the image border itself produces no boundary.
inline IntMap boundary_target(const IntMap& label_t1, const IntMap& label_t2) {
  if (!label_t1.same_shape(label_t2))
    throw ValidationError("boundary_target: label shape mismatch");
  int H = label_t1.h, W = label_t1.w;
  IntMap mask(H, W);
  for (int64_t i = 0; i < mask.size(); ++i)
    mask.v[i] = (label_t1.v[i] > 0 || label_t2.v[i] > 0) ? 1 : 0;
  IntMap boundary(H, W);
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      int m = mask.at(r, c);
      bool diff = (r > 0 && mask.at(r - 1, c) != m) || (r < H - 1 && mask.at(r + 1, c) != m) ||
                  (c > 0 && mask.at(r, c - 1) != m) || (c < W - 1 && mask.at(r, c + 1) != m);
      boundary.at(r, c) = diff ? 1 : 0;
    }
  }
  return boundary;
}

inline IntMap change_mask(const IntMap& label_t1, const IntMap& label_t2) {
  if (!label_t1.same_shape(label_t2)) throw ValidationError("change_mask: label shape mismatch");
  IntMap mask(label_t1.h, label_t1.w);
  for (int64_t i = 0; i < mask.size(); ++i)
    mask.v[i] = (label_t1.v[i] > 0 || label_t2.v[i] > 0) ? 1 : 0;
  return mask;
}

template <typename T>
struct LossWeights {
  T sem = T(1.0);
  T cd = T(1.0);
  T bd = T(0.5);
  T sim = T(0.1);
  T boundary_pos_weight = T(5.0);
  T similarity_margin = T(0.0);
};

struct LossReport {
  double total = 0.0;
  double sem = 0.0;
  double change = 0.0;
  double boundary = 0.0;
  double similarity = 0.0;
};

// Batched training targets assembled from BiTemporalSamples.
template <typename T>
struct BatchTargets {
  std::vector<int> labels1;  // [B*H*W] class indices, 0 = no change
  std::vector<int> labels2;
  Tensor<T> change;    // [B,1,H,W] binary, no grad
  Tensor<T> boundary;  // [B,1,H,W] binary, no grad
};

template <typename T>
struct LossResult {
  Tensor<T> total;  // scalar, connected to the graph
  LossReport report;
};

// Composite objective: masked semantic cross-entropy for both timestamps,
// change BCE on the refined map, boundary BCE with positive-class weighting,
// and the cosine similarity consistency term.
template <typename T>
LossResult<T> scd_loss(const ModelOutputs<T>& out, const BatchTargets<T>& tgt,
                       const LossWeights<T>& w) {
  Tensor<T> ce1 = softmax_ce_masked(out.preds.sem1_logits, tgt.labels1, 0);
  Tensor<T> ce2 = softmax_ce_masked(out.preds.sem2_logits, tgt.labels2, 0);
  Tensor<T> sem = scale_const(add(ce1, ce2), T(0.5));
  Tensor<T> change = bce_with_logits(out.preds.change_logits, tgt.change);
  Tensor<T> boundary =
      bce_with_logits(out.preds.boundary_logits, tgt.boundary, w.boundary_pos_weight);
  Tensor<T> sim =
      similarity_loss(out.sem1_feat, out.sem2_feat, tgt.change, w.similarity_margin);

  LossReport rep;
  rep.sem = double(sem.item());
  rep.change = double(change.item());
  rep.boundary = double(boundary.item());
  rep.similarity = double(sim.item());
  auto check = [](double v, const char* name) {
    if (!std::isfinite(v))
      throw TrainingError(std::string("non-finite loss component: ") + name + " = " +
                          std::to_string(v));
  };
  check(rep.sem, "sem");
  check(rep.change, "change");
  check(rep.boundary, "boundary");
  check(rep.similarity, "similarity");

  Tensor<T> total = add(add(scale_const(sem, w.sem), scale_const(change, w.cd)),
                        add(scale_const(boundary, w.bd), scale_const(sim, w.sim)));
  rep.total = double(total.item());
  return {total, rep};
}

}  // namespace dbtanet
