#pragma once

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <string>
#include <vector>

#include "dbtanet/core/grid.hpp"
#include "dbtanet/core/tensor.hpp"

namespace dbtanet {

// C x C confusion counts; rows index the predicted class, columns the ground
// truth, class 0 is no-change. Accumulation is mergeable so evaluation can
// be sharded.
class ConfusionMatrix {
 public:
  explicit ConfusionMatrix(int classes) : classes_(classes) {
    if (classes < 2) throw ValidationError("ConfusionMatrix: need at least 2 classes");
    counts_.assign(size_t(classes) * classes, 0);
  }

  int classes() const { return classes_; }

  int64_t at(int pred, int gt) const { return counts_[size_t(pred) * classes_ + gt]; }
  int64_t& at(int pred, int gt) { return counts_[size_t(pred) * classes_ + gt]; }

  void update(const IntMap& pred, const IntMap& gt) {
    if (!pred.same_shape(gt)) throw ValidationError("update_confusion: shape mismatch");
    for (int64_t i = 0; i < pred.size(); ++i) {
      int p = pred.v[i], g = gt.v[i];
      if (p < 0 || p >= classes_ || g < 0 || g >= classes_)
        throw ValidationError("update_confusion: class index out of range (pred=" +
                              std::to_string(p) + ", gt=" + std::to_string(g) + ", C=" +
                              std::to_string(classes_) + ")");
      ++counts_[size_t(p) * classes_ + g];
    }
  }

  void merge(const ConfusionMatrix& o) {
    if (o.classes_ != classes_) throw ValidationError("ConfusionMatrix: merge class mismatch");
    for (size_t i = 0; i < counts_.size(); ++i) counts_[i] += o.counts_[i];
  }

  int64_t total() const {
    int64_t t = 0;
    for (int64_t c : counts_) t += c;
    return t;
  }

 private:
  int classes_;
  std::vector<int64_t> counts_;
};

struct ScdScores {
  double oa = 0.0;
  double miou = 0.0;
  double sek = 0.0;
  double f1 = 0.0;
};

namespace detail {
inline double ratio0(double num, double den) { return den == 0.0 ? 0.0 : num / den; }
}  // namespace detail

// The four SCD scores from the confusion matrix: overall accuracy, binarized
// two-class mean IoU, separated kappa (kappa over the matrix with the
// no-change/no-change cell zeroed, scaled by e^(IoU_c - 1)), and the F1 over
// semantically correct changed pixels.
inline ScdScores compute_scores(const ConfusionMatrix& q) {
  const int C = q.classes();
  const double total = static_cast<double>(q.total());
  if (total <= 0.0) throw ValidationError("compute_scores: empty confusion matrix");

  double trace = 0.0;
  for (int i = 0; i < C; ++i) trace += double(q.at(i, i));

  double b00 = double(q.at(0, 0));
  double b01 = 0.0, b10 = 0.0, b11 = 0.0;
  for (int j = 1; j < C; ++j) b01 += double(q.at(0, j));
  for (int i = 1; i < C; ++i) b10 += double(q.at(i, 0));
  for (int i = 1; i < C; ++i)
    for (int j = 1; j < C; ++j) b11 += double(q.at(i, j));

  ScdScores s;
  s.oa = trace / total;
  s.miou = 0.5 * (detail::ratio0(b00, b00 + b01 + b10) + detail::ratio0(b11, b11 + b01 + b10));
  double iou_c = detail::ratio0(b11, b11 + b01 + b10);

  // kappa over the matrix with the (0,0) cell removed
  double hat_total = total - b00;
  double kappa = 0.0;
  if (hat_total > 0.0) {
    double hat_trace = trace - b00;
    double pe_num = 0.0;
    for (int i = 0; i < C; ++i) {
      double row = 0.0, col = 0.0;
      for (int j = 0; j < C; ++j) {
        double vr = double(q.at(i, j));
        double vc = double(q.at(j, i));
        if (i == 0 && j == 0) {
          vr = 0.0;
          vc = 0.0;
        }
        row += vr;
        col += vc;
      }
      pe_num += row * col;
    }
    double po = hat_trace / hat_total;
    double pe = pe_num / (hat_total * hat_total);
    kappa = (1.0 - pe) == 0.0 ? 0.0 : (po - pe) / (1.0 - pe);
  }
  s.sek = std::exp(iou_c - 1.0) * kappa;

  double diag_c = 0.0, pred_c = 0.0, gt_c = 0.0;
  for (int i = 1; i < C; ++i) {
    diag_c += double(q.at(i, i));
    for (int j = 0; j < C; ++j) {
      pred_c += double(q.at(i, j));
      gt_c += double(q.at(j, i));
    }
  }
  double precision = detail::ratio0(diag_c, pred_c);
  double recall = detail::ratio0(diag_c, gt_c);
  s.f1 = detail::ratio0(2.0 * precision * recall, precision + recall);
  return s;
}

inline std::string scores_json(const ScdScores& s) {
  char buf[160];
  std::snprintf(buf, sizeof(buf), "{\"oa\":%.6f,\"miou\":%.6f,\"sek\":%.6f,\"f1\":%.6f}", s.oa,
                s.miou, s.sek, s.f1);
  return std::string(buf);
}

// Binary F1 of a thresholded change map against the ground-truth mask.
inline double binary_f1(const IntMap& pred, const IntMap& gt) {
  if (!pred.same_shape(gt)) throw ValidationError("binary_f1: shape mismatch");
  int64_t tp = 0, fp = 0, fn = 0;
  for (int64_t i = 0; i < pred.size(); ++i) {
    bool p = pred.v[i] != 0, g = gt.v[i] != 0;
    if (p && g) ++tp;
    else if (p && !g) ++fp;
    else if (!p && g) ++fn;
  }
  double denom = 2.0 * double(tp) + double(fp) + double(fn);
  return denom == 0.0 ? 0.0 : 2.0 * double(tp) / denom;
}

}  // namespace dbtanet
