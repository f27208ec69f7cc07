#include <catch2/catch_amalgamated.hpp>

#include "dbtanet/fusion.hpp"
#include "test_util.hpp"

using namespace dbtanet;
using testutil::max_grad_err;
using testutil::random_tensor;

namespace {

// Independent scalar oracle: evaluate exp(-r^2 / 2 sigma^2) on the integer
// grid and normalize. Kept separate from gaussian_kernel on purpose.
std::vector<double> gaussian_oracle(double sigma, int size) {
  std::vector<double> w(size_t(size) * size);
  double sum = 0.0;
  int r = size / 2;
  for (int i = 0; i < size; ++i)
    for (int j = 0; j < size; ++j) {
      double d2 = double(i - r) * (i - r) + double(j - r) * (j - r);
      w[size_t(i) * size + j] = std::exp(-d2 / (2.0 * sigma * sigma));
      sum += w[size_t(i) * size + j];
    }
  for (auto& v : w) v /= sum;
  return w;
}

}  // namespace

TEST_CASE("gaussian kernel values match the scalar oracle", "[fusion]") {
  // frozen oracle outputs for the 3x3 kernels
  auto k10 = gaussian_kernel<double>(1.0, 3);
  CHECK(k10.weights[4] == Catch::Approx(0.2041799556).margin(1e-4));
  CHECK(k10.weights[1] == Catch::Approx(0.1238414032).margin(1e-4));
  CHECK(k10.weights[0] == Catch::Approx(0.0751136080).margin(1e-4));
  auto k06 = gaussian_kernel<double>(0.6, 3);
  CHECK(k06.weights[4] == Catch::Approx(0.4452131928).margin(1e-4));
  CHECK(k06.weights[1] == Catch::Approx(0.1110148930).margin(1e-4));
  CHECK(k06.weights[0] == Catch::Approx(0.0276818088).margin(1e-4));

  for (double sigma : {1.0, 0.8, 0.6})
    for (int size : {3, 5}) {
      auto k = gaussian_kernel<double>(sigma, size);
      auto oracle = gaussian_oracle(sigma, size);
      for (size_t i = 0; i < oracle.size(); ++i)
        REQUIRE(k.weights[i] == Catch::Approx(oracle[i]).margin(1e-12));
    }
}

TEST_CASE("gaussian kernel normalization, symmetry, positivity", "[fusion]") {
  for (double sigma : {1.0, 0.8, 0.6, 2.5})
    for (int size : {1, 3, 5, 7}) {
      auto k = gaussian_kernel<double>(sigma, size);
      double sum = 0.0;
      for (double w : k.weights) {
        REQUIRE(w > 0.0);
        sum += w;
      }
      REQUIRE(sum == Catch::Approx(1.0).margin(1e-6));
      for (int i = 0; i < size; ++i)
        for (int j = 0; j < size; ++j) {
          double w = k.weights[size_t(i) * size + j];
          REQUIRE(w == k.weights[size_t(i) * size + (size - 1 - j)]);
          REQUIRE(w == k.weights[size_t(size - 1 - i) * size + j]);
          REQUIRE(w == k.weights[size_t(j) * size + i]);
        }
    }
  REQUIRE_THROWS_AS(gaussian_kernel<double>(0.0, 3), ValidationError);
  REQUIRE_THROWS_AS(gaussian_kernel<double>(-1.0, 3), ValidationError);
  REQUIRE_THROWS_AS(gaussian_kernel<double>(1.0, 4), ValidationError);
}

TEST_CASE("gcb depthwise stage fixes constants and damps noise", "[fusion]") {
  Rng rng(3);
  Gcb<double> gcb(4, 1.0, rng);
  Tensor<double> c = Tensor<double>::full({2, 4, 8, 8}, 1.75);
  Tensor<double> smoothed = gcb.smooth(c);
  for (int64_t i = 0; i < smoothed.size(); ++i)
    REQUIRE(smoothed.data()[i] == Catch::Approx(1.75).margin(1e-12));

  // unit-variance white noise: spatial variance strictly drops, 10 seeds
  for (uint64_t seed = 0; seed < 10; ++seed) {
    Rng nrng(100 + seed);
    Tensor<double> x({1, 1, 16, 16});
    for (int64_t i = 0; i < x.size(); ++i) x.data()[i] = nrng.normal(0.0, 1.0);
    Tensor<double> y = gcb.smooth(x);
    auto variance = [](const Tensor<double>& t) {
      double m = 0.0, s = 0.0;
      for (int64_t i = 0; i < t.size(); ++i) m += t.data()[i];
      m /= double(t.size());
      for (int64_t i = 0; i < t.size(); ++i) s += (t.data()[i] - m) * (t.data()[i] - m);
      return s / double(t.size());
    };
    REQUIRE(variance(y) < variance(x));
  }
}

TEST_CASE("gcb fixed kernel is not a parameter", "[fusion]") {
  Rng rng(4);
  Gcb<float> gcb(3, 0.8f, rng);
  auto before = gcb.kernel.weights;
  auto params = gcb.trainable_parameters();
  for (const auto& nt : gcb.named_state()) REQUIRE(nt.name.find("kernel") == std::string::npos);
  AdamW<float> opt(params, 0.1f);
  for (int step = 0; step < 3; ++step) {
    Tape<float> tape;
    Tensor<float> x = random_tensor<float>({1, 3, 6, 6}, rng);
    Tensor<float> loss = sum_all(gcb.forward(x));
    tape.backward(loss);
    opt.step();
    opt.zero_grad();
  }
  REQUIRE(gcb.kernel.weights == before);
}

TEST_CASE("gspm zero and residual-identity configurations", "[fusion]") {
  Rng rng(5);
  Gspm<double> gspm(8, rng);
  for (auto& nt : gspm.named_state())
    std::fill(nt.tensor.vec().begin(), nt.tensor.vec().end(), 0.0);
  Tensor<double> x = random_tensor<double>({2, 8, 6, 6}, rng);
  Tensor<double> y = gspm.forward(x);
  for (int64_t i = 0; i < y.size(); ++i) REQUIRE(y.data()[i] == 0.0);

  // residual path = identity, main path projection = zero -> exact identity
  for (int c = 0; c < 8; ++c) gspm.residual.weight.data()[c * 8 + c] = 1.0;
  Tensor<double> y2 = gspm.forward(x);
  REQUIRE(testutil::max_abs_diff(y2, x) == 0.0);
}

TEST_CASE("gspm preserves shape", "[fusion]") {
  Rng rng(6);
  Gspm<float> gspm(64, rng);
  gspm.set_training(false);
  Tensor<float> x = random_tensor<float>({2, 64, 16, 16}, rng);
  Tensor<float> y = gspm.forward(x);
  REQUIRE(y.shape() == Shape{2, 64, 16, 16});
  REQUIRE(all_finite(y));
}

TEST_CASE("gspm gradient check", "[fusion]") {
  Rng rng(7);
  Gspm<double> gspm(4, rng);
  gspm.set_training(true);
  Tensor<double> x = random_tensor<double>({1, 4, 8, 8}, rng);
  std::vector<Tensor<double>> params = gspm.trainable_parameters();
  double err = max_grad_err<double>(params, [&]() { return sum_all(gspm.forward(x)); });
  REQUIRE(err < 1e-4);
}

TEST_CASE("gate_fuse degenerate cases and convexity", "[fusion]") {
  Rng rng(8);
  Tensor<double> a = random_tensor<double>({2, 3, 4, 4}, rng);
  Tensor<double> b = random_tensor<double>({2, 3, 4, 4}, rng);

  REQUIRE(testutil::max_abs_diff(gate_fuse(a, b, 0.0), a) == 0.0);
  REQUIRE(testutil::max_abs_diff(gate_fuse(a, b, 1.0), b) == 0.0);

  Tensor<double> twos = Tensor<double>::full({1, 2, 3, 3}, 2.0);
  Tensor<double> fours = Tensor<double>::full({1, 2, 3, 3}, 4.0);
  Tensor<double> mid = gate_fuse(twos, fours, 0.5);
  for (int64_t i = 0; i < mid.size(); ++i) REQUIRE(mid.data()[i] == 3.0);

  for (double gamma : {0.1, 0.3, 0.7, 0.95}) {
    Tensor<double> y = gate_fuse(a, b, gamma);
    for (int64_t i = 0; i < y.size(); ++i) {
      REQUIRE(y.data()[i] >= std::min(a.data()[i], b.data()[i]) - 1e-12);
      REQUIRE(y.data()[i] <= std::max(a.data()[i], b.data()[i]) + 1e-12);
    }
  }

  REQUIRE_THROWS_AS(gate_fuse(a, b, -0.1), ValidationError);
  REQUIRE_THROWS_AS(gate_fuse(a, b, 1.1), ValidationError);
  Tensor<double> wrong({2, 3, 4, 5});
  REQUIRE_THROWS_AS(gate_fuse(a, wrong, 0.5), ValidationError);
}
