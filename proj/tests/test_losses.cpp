#include <catch2/catch_amalgamated.hpp>

#include "dbtanet/losses.hpp"
#include "dbtanet/train.hpp"
#include "test_util.hpp"

using namespace dbtanet;
using testutil::random_tensor;

TEST_CASE("boundary_target basics", "[losses]") {
  IntMap zeros(4, 4);
  IntMap b = boundary_target(zeros, zeros);
  for (int v : b.v) REQUIRE(v == 0);

  // left half changed: boundary sits on columns 1 and 2, 8 pixels
  IntMap l1(4, 4), l2(4, 4);
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 2; ++c) l1.at(r, c) = 1;
  IntMap bb = boundary_target(l1, l2);
  int total = 0;
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) {
      bool expect = (c == 1 || c == 2);
      REQUIRE(bb.at(r, c) == (expect ? 1 : 0));
      total += bb.at(r, c);
    }
  REQUIRE(total == 8);

  IntMap wrong(4, 5);
  REQUIRE_THROWS_AS(boundary_target(l1, wrong), ValidationError);
}

TEST_CASE("boundary of a mask equals boundary of its complement", "[losses]") {
  Rng rng(97);
  for (int trial = 0; trial < 10; ++trial) {
    IntMap m(8, 8), inv(8, 8), zeros(8, 8);
    for (int64_t i = 0; i < m.size(); ++i) {
      m.v[size_t(i)] = rng.uniform() < 0.4 ? 1 : 0;
      inv.v[size_t(i)] = 1 - m.v[size_t(i)];
    }
    REQUIRE(boundary_target(m, zeros).v == boundary_target(inv, zeros).v);
  }
}

TEST_CASE("similarity loss fixed points", "[losses]") {
  Rng rng(101);
  Tensor<double> a = random_tensor<double>({2, 4, 3, 3}, rng, 0.5, 1.5);
  Tensor<double> zeros({2, 1, 3, 3});
  Tensor<double> ones = Tensor<double>::full({2, 1, 3, 3}, 1.0);

  REQUIRE(similarity_loss(a, a, zeros).item() == 0.0);
  REQUIRE(similarity_loss(a, a, ones).item() == Catch::Approx(1.0).margin(1e-12));

  // per-pixel orthogonal features on changed pixels incur no penalty
  Tensor<double> e0({1, 4, 2, 2}), e1({1, 4, 2, 2});
  for (int p = 0; p < 4; ++p) {
    e0.data()[0 * 4 + p] = 1.0;  // channel 0
    e1.data()[1 * 4 + p] = 1.0;  // channel 1
  }
  Tensor<double> allc = Tensor<double>::full({1, 1, 2, 2}, 1.0);
  REQUIRE(similarity_loss(e0, e1, allc).item() == 0.0);

  // symmetric in the two feature arguments
  Tensor<double> b = random_tensor<double>({2, 4, 3, 3}, rng);
  Tensor<double> mask({2, 1, 3, 3});
  for (int64_t i = 0; i < mask.size(); ++i) mask.data()[i] = rng.uniform() < 0.5 ? 1.0 : 0.0;
  REQUIRE(similarity_loss(a, b, mask).item() ==
          Catch::Approx(similarity_loss(b, a, mask).item()).margin(1e-15));
}

namespace {

template <typename T>
ModelOutputs<T> fake_outputs(int B, int C, int H, int W) {
  ModelOutputs<T> out;
  out.preds.sem1_logits = Tensor<T>(Shape{B, C, H, W});
  out.preds.sem2_logits = Tensor<T>(Shape{B, C, H, W});
  out.preds.change_logits = Tensor<T>(Shape{B, 1, H, W});
  out.preds.boundary_logits = Tensor<T>(Shape{B, 1, H, W});
  out.sem1_feat = Tensor<T>::full(Shape{B, 4, H, W}, T(0.5));
  out.sem2_feat = Tensor<T>::full(Shape{B, 4, H, W}, T(0.5));
  return out;
}

template <typename T>
BatchTargets<T> fake_targets(int B, int H, int W, const std::vector<int>& l1,
                             const std::vector<int>& l2) {
  BatchTargets<T> t;
  t.labels1 = l1;
  t.labels2 = l2;
  t.change = Tensor<T>(Shape{B, 1, H, W});
  t.boundary = Tensor<T>(Shape{B, 1, H, W});
  for (size_t i = 0; i < l1.size(); ++i)
    t.change.data()[i] = (l1[i] > 0 || l2[i] > 0) ? T(1) : T(0);
  return t;
}

}  // namespace

TEST_CASE("scd_loss on uniform logits recovers ln C and ln 2", "[losses]") {
  const int B = 1, C = 5, H = 4, W = 4;
  auto out = fake_outputs<double>(B, C, H, W);
  std::vector<int> l1(16, 0), l2(16, 0);
  l1[0] = 1; l1[5] = 2; l2[0] = 3; l2[5] = 4;  // a few labeled pixels
  auto tgt = fake_targets<double>(B, H, W, l1, l2);
  LossWeights<double> w;
  w.boundary_pos_weight = 1.0;
  w.sim = 0.0;
  auto res = scd_loss(out, tgt, w);
  REQUIRE(res.report.sem == Catch::Approx(std::log(5.0)).margin(1e-12));
  REQUIRE(res.report.change == Catch::Approx(std::log(2.0)).margin(1e-12));
  REQUIRE(res.report.boundary == Catch::Approx(std::log(2.0)).margin(1e-12));
}

TEST_CASE("scd_loss saturated correct logits drive sem and change to ~0", "[losses]") {
  const int B = 1, C = 3, H = 2, W = 2;
  auto out = fake_outputs<double>(B, C, H, W);
  std::vector<int> l1 = {1, 2, 0, 0}, l2 = {2, 1, 0, 0};
  auto tgt = fake_targets<double>(B, H, W, l1, l2);
  int64_t HW = H * W;
  for (int64_t p = 0; p < HW; ++p) {
    if (l1[size_t(p)] > 0) out.preds.sem1_logits.data()[l1[size_t(p)] * HW + p] = 50.0;
    if (l2[size_t(p)] > 0) out.preds.sem2_logits.data()[l2[size_t(p)] * HW + p] = 50.0;
    out.preds.change_logits.data()[p] = tgt.change.data()[p] > 0.5 ? 50.0 : -50.0;
  }
  LossWeights<double> w;
  auto res = scd_loss(out, tgt, w);
  REQUIRE(res.report.sem < 1e-3);
  REQUIRE(res.report.change < 1e-3);
}

TEST_CASE("loss report linear-combination identity", "[losses]") {
  Rng rng(107);
  const int B = 2, C = 4, H = 4, W = 4;
  auto out = fake_outputs<double>(B, C, H, W);
  for (auto* t : {&out.preds.sem1_logits, &out.preds.sem2_logits, &out.preds.change_logits,
                  &out.preds.boundary_logits, &out.sem1_feat, &out.sem2_feat})
    for (int64_t i = 0; i < t->size(); ++i) t->data()[i] = rng.uniform(-2, 2);
  std::vector<int> l1(size_t(B) * H * W), l2(size_t(B) * H * W);
  for (auto& v : l1) v = rng.uniform_int(0, C - 1);
  for (auto& v : l2) v = rng.uniform_int(0, C - 1);
  auto tgt = fake_targets<double>(B, H, W, l1, l2);
  for (int64_t i = 0; i < tgt.boundary.size(); ++i)
    tgt.boundary.data()[i] = rng.uniform() < 0.2 ? 1.0 : 0.0;
  LossWeights<double> w;
  w.sem = 1.3; w.cd = 0.7; w.bd = 0.4; w.sim = 0.2;
  auto res = scd_loss(out, tgt, w);
  double combo = w.sem * res.report.sem + w.cd * res.report.change + w.bd * res.report.boundary +
                 w.sim * res.report.similarity;
  REQUIRE(res.report.total == Catch::Approx(combo).margin(1e-6));
  REQUIRE(res.report.sem >= 0.0);
  REQUIRE(res.report.change >= 0.0);
  REQUIRE(res.report.boundary >= 0.0);
  REQUIRE(res.report.similarity >= 0.0);
}

TEST_CASE("sem component ignores predictions at no-change pixels", "[losses]") {
  Rng rng(109);
  const int B = 1, C = 4, H = 4, W = 4;
  auto out = fake_outputs<double>(B, C, H, W);
  std::vector<int> l1(16, 0), l2(16, 0);
  l1[3] = 2, l2[3] = 1;
  auto tgt = fake_targets<double>(B, H, W, l1, l2);
  LossWeights<double> w;
  auto base = scd_loss(out, tgt, w);
  // scribble over logits at ignored pixels only
  auto out2 = fake_outputs<double>(B, C, H, W);
  for (int c = 0; c < C; ++c)
    for (int64_t p = 0; p < 16; ++p)
      if (p != 3) out2.preds.sem1_logits.data()[c * 16 + p] = rng.uniform(-9, 9);
  auto res2 = scd_loss(out2, tgt, w);
  REQUIRE(res2.report.sem == Catch::Approx(base.report.sem).margin(1e-12));
}

TEST_CASE("non-finite loss components abort with the component named", "[losses]") {
  const int B = 1, C = 3, H = 2, W = 2;
  auto out = fake_outputs<double>(B, C, H, W);
  std::vector<int> l1 = {1, 0, 0, 0}, l2 = {2, 0, 0, 0};
  auto tgt = fake_targets<double>(B, H, W, l1, l2);
  out.preds.sem1_logits.data()[0] = std::numeric_limits<double>::quiet_NaN();
  LossWeights<double> w;
  try {
    scd_loss(out, tgt, w);
    FAIL("expected TrainingError");
  } catch (const TrainingError& e) {
    REQUIRE(std::string(e.what()).find("sem") != std::string::npos);
  }
}

TEST_CASE("gradients at initialization are finite on a random batch", "[losses]") {
  Rng rng(113);
  ModelConfig mc;
  mc.classes = 4;
  mc.shallow_channels = 8;
  mc.deep_channels = 16;
  mc.msa_channels = 16;
  mc.msa_branch_channels = 8;
  mc.decoder_channels = 8;
  mc.stage_depths = {1, 1, 1, 1};
  DbtaNet<float> model(mc);
  model.set_training(true);

  SceneSpec spec;
  spec.height = spec.width = 32;
  spec.classes = 4;
  spec.seed = 5;
  std::vector<BiTemporalSample<float>> samples = {generate_scene<float>(spec)};
  spec.seed = 6;
  samples.push_back(generate_scene<float>(spec));
  Batch<float> b = make_batch(samples, {0, 1});

  Tape<float> tape;
  auto out = model.forward(b.images1, b.images2);
  LossWeights<float> w;
  auto res = scd_loss(out, b.targets, w);
  tape.backward(res.total);
  for (const auto& p : model.trainable_parameters()) {
    REQUIRE(p.has_grad());
    for (int64_t i = 0; i < p.size(); ++i) REQUIRE(std::isfinite(p.grad()[i]));
  }
}
