#include <catch2/catch_amalgamated.hpp>

#include "dbtanet/heads.hpp"
#include "test_util.hpp"

using namespace dbtanet;
using testutil::max_abs_diff;
using testutil::random_tensor;

TEST_CASE("sobel magnitude on constants is at the epsilon floor", "[heads]") {
  Tensor<double> c = Tensor<double>::full({2, 1, 6, 6}, 0.7);
  Tensor<double> m = sobel_edges(c);
  for (int64_t i = 0; i < m.size(); ++i) {
    REQUIRE(m.data()[i] >= 0.0);
    REQUIRE(m.data()[i] <= std::sqrt(1e-8) + 1e-12);
  }
}

TEST_CASE("sobel on a vertical step matches the hand-convolved oracle", "[heads]") {
  // columns 0,0,1,1; |Gx| = 4 beside the step, 0 at the outer columns
  Tensor<double> x({1, 1, 4, 4});
  for (int r = 0; r < 4; ++r)
    for (int c = 0; c < 4; ++c) x.data()[r * 4 + c] = c >= 2 ? 1.0 : 0.0;
  Tensor<double> m = sobel_edges(x);
  for (int r = 0; r < 4; ++r) {
    REQUIRE(m.data()[r * 4 + 0] <= 1e-3);
    REQUIRE(m.data()[r * 4 + 1] == Catch::Approx(4.0).margin(1e-6));
    REQUIRE(m.data()[r * 4 + 2] == Catch::Approx(4.0).margin(1e-6));
    REQUIRE(m.data()[r * 4 + 3] <= 1e-3);
  }
}

TEST_CASE("sobel rejects multi-channel input", "[heads]") {
  Tensor<double> x({1, 3, 4, 4});
  REQUIRE_THROWS_AS(sobel_edges(x), ValidationError);
}

TEST_CASE("semantic decoder shape contract and siamese sharing", "[heads]") {
  Rng rng(71);
  SemanticDecoder<float> dec(64, 256, 64, 5, rng);
  dec.set_training(false);
  Tensor<float> shallow = random_tensor<float>({1, 64, 16, 16}, rng);
  Tensor<float> deep = random_tensor<float>({1, 256, 4, 4}, rng);
  auto out = dec.forward(shallow, deep, 64, 64);
  REQUIRE(out.logits.shape() == Shape{1, 5, 64, 64});
  REQUIRE(out.feat.shape() == Shape{1, 64, 16, 16});

  // identical inputs through the same decoder give identical logits
  auto out2 = dec.forward(shallow, deep, 64, 64);
  REQUIRE(max_abs_diff(out.logits, out2.logits) == 0.0);
}

TEST_CASE("zero projection gives uniform class posterior", "[heads]") {
  Rng rng(73);
  SemanticDecoder<float> dec(8, 16, 8, 4, rng);
  dec.set_training(false);
  std::fill(dec.proj.weight.vec().begin(), dec.proj.weight.vec().end(), 0.0f);
  std::fill(dec.proj.bias.vec().begin(), dec.proj.bias.vec().end(), 0.0f);
  Tensor<float> shallow = random_tensor<float>({2, 8, 8, 8}, rng);
  Tensor<float> deep = random_tensor<float>({2, 16, 2, 2}, rng);
  auto out = dec.forward(shallow, deep, 32, 32);
  for (int64_t i = 0; i < out.logits.size(); ++i) REQUIRE(out.logits.data()[i] == 0.0f);
  // all-zero logits -> softmax 1/C per class
}

TEST_CASE("change decoder shape, zero-projection logits, determinism", "[heads]") {
  Rng rng(79);
  ChangeDecoder<float> dec(256, 64, rng);
  dec.set_training(false);
  Tensor<float> x = random_tensor<float>({2, 256, 4, 4}, rng);
  Tensor<float> y = dec.forward(x, 64, 64);
  REQUIRE(y.shape() == Shape{2, 1, 64, 64});
  Tensor<float> y2 = dec.forward(x, 64, 64);
  REQUIRE(max_abs_diff(y, y2) == 0.0);

  std::fill(dec.proj.weight.vec().begin(), dec.proj.weight.vec().end(), 0.0f);
  std::fill(dec.proj.bias.vec().begin(), dec.proj.bias.vec().end(), 0.0f);
  Tensor<float> z = dec.forward(x, 64, 64);
  for (int64_t i = 0; i < z.size(); ++i) {
    REQUIRE(z.data()[i] == 0.0f);
    REQUIRE(sigmoid_scalar(z.data()[i]) == 0.5f);  // change probability 0.5
  }
}

TEST_CASE("boundary decoder shape and near-zero logits for zero projection", "[heads]") {
  Rng rng(83);
  BoundaryDecoder<float> dec(128, rng);
  Tensor<float> x = random_tensor<float>({2, 128, 16, 16}, rng);
  Tensor<float> y = dec.forward(x, 64, 64);
  REQUIRE(y.shape() == Shape{2, 1, 64, 64});

  std::fill(dec.proj.weight.vec().begin(), dec.proj.weight.vec().end(), 0.0f);
  std::fill(dec.proj.bias.vec().begin(), dec.proj.bias.vec().end(), 0.0f);
  Tensor<float> z = dec.forward(x, 64, 64);
  for (int64_t i = 0; i < z.size(); ++i) REQUIRE(std::abs(z.data()[i]) <= 2e-4f);

  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng r(seed);
    Tensor<float> rx = random_tensor<float>({1, 128, 8, 8}, r, -2.0, 2.0);
    REQUIRE(all_finite(dec.forward(rx, 32, 32)));
  }
}

TEST_CASE("task interaction is additive, symmetric, shape preserving", "[heads]") {
  Rng rng(89);
  TaskInteraction<float> ti(64, rng);
  Tensor<float> f1 = random_tensor<float>({1, 64, 64, 64}, rng);
  Tensor<float> f2 = random_tensor<float>({1, 64, 64, 64}, rng);
  Tensor<float> change = random_tensor<float>({1, 1, 64, 64}, rng);

  Tensor<float> r12 = ti.forward(f1, f2, change);
  Tensor<float> r21 = ti.forward(f2, f1, change);
  REQUIRE(r12.shape() == Shape{1, 1, 64, 64});
  REQUIRE(max_abs_diff(r12, r21) == 0.0);

  // equal features + zero bias leave the change logits untouched
  std::fill(ti.proj.bias.vec().begin(), ti.proj.bias.vec().end(), 0.0f);
  Tensor<float> same = ti.forward(f1, f1, change);
  REQUIRE(max_abs_diff(same, change) == 0.0);

  Tensor<float> small({1, 1, 32, 32});
  REQUIRE_THROWS_AS(ti.forward(f1, f2, small), ValidationError);
}
