#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "dbtanet/data/dataset.hpp"
#include "test_util.hpp"

using namespace dbtanet;
namespace fs = std::filesystem;

namespace {

SceneSpec small_spec(uint64_t seed) {
  SceneSpec s;
  s.height = s.width = 32;
  s.classes = 5;
  s.min_shapes = 3;
  s.max_shapes = 6;
  s.change_ratio = 0.2;
  s.noise_std = 0.03;
  s.seed = seed;
  return s;
}

void check_invariants(const BiTemporalSample<float>& s, int classes) {
  for (int64_t i = 0; i < s.change.size(); ++i) {
    bool labeled = s.label_t1.v[size_t(i)] > 0 || s.label_t2.v[size_t(i)] > 0;
    REQUIRE(s.change.v[size_t(i)] == (labeled ? 1 : 0));
    if (s.label_t1.v[size_t(i)] != s.label_t2.v[size_t(i)])
      REQUIRE(s.change.v[size_t(i)] == 1);
    REQUIRE(s.label_t1.v[size_t(i)] >= 0);
    REQUIRE(s.label_t1.v[size_t(i)] < classes);
    REQUIRE(s.label_t2.v[size_t(i)] < classes);
  }
  REQUIRE(s.boundary.v == boundary_target(s.label_t1, s.label_t2).v);
  for (int64_t i = 0; i < s.image_t1.size(); ++i) {
    REQUIRE(s.image_t1.data()[i] >= 0.0f);
    REQUIRE(s.image_t1.data()[i] <= 1.0f);
  }
}

}  // namespace

TEST_CASE("scene generation is deterministic in the seed", "[data]") {
  auto a = generate_scene<float>(small_spec(9));
  auto b = generate_scene<float>(small_spec(9));
  REQUIRE(a.label_t1.v == b.label_t1.v);
  REQUIRE(a.label_t2.v == b.label_t2.v);
  REQUIRE(testutil::max_abs_diff(a.image_t1, b.image_t1) == 0.0);
  REQUIRE(testutil::max_abs_diff(a.image_t2, b.image_t2) == 0.0);

  auto c = generate_scene<float>(small_spec(10));
  REQUIRE(c.label_t1.v != a.label_t1.v);
}

TEST_CASE("zero shapes produce a no-change scene", "[data]") {
  SceneSpec s = small_spec(3);
  s.min_shapes = 0;
  s.max_shapes = 0;
  auto sample = generate_scene<float>(s);
  for (int v : sample.label_t1.v) REQUIRE(v == 0);
  for (int v : sample.label_t2.v) REQUIRE(v == 0);
  for (int v : sample.change.v) REQUIRE(v == 0);
}

TEST_CASE("scene invariants hold across seeds", "[data]") {
  for (uint64_t seed = 0; seed < 20; ++seed) {
    auto s = generate_scene<float>(small_spec(seed));
    check_invariants(s, 5);
  }
}

TEST_CASE("change fraction approaches the requested ratio", "[data]") {
  double mean = 0.0;
  const int n = 100;
  for (uint64_t seed = 0; seed < n; ++seed) {
    SceneSpec spec = small_spec(1000 + seed);
    auto s = generate_scene<float>(spec);
    double frac = 0.0;
    for (int v : s.change.v) frac += v;
    frac /= double(s.change.size());
    REQUIRE(frac >= spec.change_ratio - 0.15);
    REQUIRE(frac <= spec.change_ratio + 0.15);
    mean += frac;
  }
  mean /= n;
  REQUIRE(mean >= 0.05);
  REQUIRE(mean <= 0.35);
}

TEST_CASE("scene spec validation", "[data]") {
  SceneSpec s = small_spec(0);
  s.height = 30;
  REQUIRE_THROWS_AS(s.validate(), ValidationError);
  s = small_spec(0);
  s.classes = 2;
  REQUIRE_THROWS_AS(s.validate(), ValidationError);
  s = small_spec(0);
  s.change_ratio = 1.0;
  REQUIRE_THROWS_AS(s.validate(), ValidationError);
  s = small_spec(0);
  s.max_shapes = 1;
  s.min_shapes = 3;
  REQUIRE_THROWS_AS(s.validate(), ValidationError);
}

TEST_CASE("augmentation preserves sample invariants and histograms", "[data]") {
  auto s = generate_scene<float>(small_spec(21));
  auto hist = [](const IntMap& m) {
    std::vector<int> h(8, 0);
    for (int v : m.v) h[size_t(v)]++;
    return h;
  };
  auto h0 = hist(s.label_t1);
  for (uint64_t seed = 0; seed < 12; ++seed) {
    auto aug = augment(s, seed);
    check_invariants(aug, 5);
    REQUIRE(hist(aug.label_t1) == h0);
  }
}

TEST_CASE("every augmentation op is inverted by its inverse", "[data]") {
  auto s = generate_scene<float>(small_spec(22));
  for (D4Op op : {D4Op::Identity, D4Op::FlipH, D4Op::FlipV, D4Op::Rot90, D4Op::Rot180,
                  D4Op::Rot270}) {
    auto fwd = apply_d4(s, op);
    auto back = apply_d4(fwd, d4_inverse(op));
    REQUIRE(back.label_t1.v == s.label_t1.v);
    REQUIRE(back.label_t2.v == s.label_t2.v);
    REQUIRE(back.change.v == s.change.v);
    REQUIRE(back.boundary.v == s.boundary.v);
    REQUIRE(testutil::max_abs_diff(back.image_t1, s.image_t1) == 0.0);
    REQUIRE(testutil::max_abs_diff(back.image_t2, s.image_t2) == 0.0);
  }
  REQUIRE(sample_augment_op(77) == sample_augment_op(77));
}

TEST_CASE("augmentation keeps the raster shape of non-square samples", "[data]") {
  SceneSpec spec = small_spec(23);
  spec.width = 48;
  auto s = generate_scene<float>(spec);
  for (uint64_t seed = 0; seed < 24; ++seed) {
    auto aug = augment(s, seed);
    REQUIRE(aug.label_t1.h == 32);
    REQUIRE(aug.label_t1.w == 48);
    check_invariants(aug, 5);
  }
}

TEST_CASE("dataset save/load round trip", "[data]") {
  fs::path root = fs::temp_directory_path() / "dbtanet_data_test";
  fs::remove_all(root);
  std::vector<BiTemporalSample<float>> originals;
  for (uint64_t seed = 0; seed < 3; ++seed) {
    auto s = generate_scene<float>(small_spec(50 + seed));
    originals.push_back(s);
    char stem[16];
    std::snprintf(stem, sizeof(stem), "%03d", int(seed));
    save_sample(root.string(), stem, s);
  }
  auto loaded = load_dataset<float>(root.string(), 5);
  REQUIRE(loaded.size() == 3);
  for (size_t i = 0; i < 3; ++i) {
    REQUIRE(loaded[i].label_t1.v == originals[i].label_t1.v);
    REQUIRE(loaded[i].label_t2.v == originals[i].label_t2.v);
    REQUIRE(loaded[i].change.v == originals[i].change.v);
    REQUIRE(loaded[i].boundary.v == originals[i].boundary.v);
    REQUIRE(testutil::max_abs_diff(loaded[i].image_t1, originals[i].image_t1) <= 1.0 / 255.0);
    REQUIRE(testutil::max_abs_diff(loaded[i].image_t2, originals[i].image_t2) <= 1.0 / 255.0);
  }
  fs::remove_all(root);
}

TEST_CASE("loader errors name the offending pair", "[data]") {
  fs::path root = fs::temp_directory_path() / "dbtanet_data_err";
  fs::remove_all(root);
  auto s = generate_scene<float>(small_spec(60));
  save_sample(root.string(), "broken", s);
  fs::remove(root / "label2" / "broken.png");
  try {
    load_dataset<float>(root.string(), 5);
    FAIL("expected ValidationError");
  } catch (const ValidationError& e) {
    REQUIRE(std::string(e.what()).find("broken") != std::string::npos);
    REQUIRE(std::string(e.what()).find("label2") != std::string::npos);
  }

  // label index >= classes
  fs::remove_all(root);
  save_sample(root.string(), "big", s);
  std::vector<uint8_t> bad(size_t(s.label_t1.h) * s.label_t1.w, 9);
  write_png_gray((root / "label1" / "big.png").string(), s.label_t1.w, s.label_t1.h, bad);
  REQUIRE_THROWS_AS(load_dataset<float>(root.string(), 5), ValidationError);
  fs::remove_all(root);
}

TEST_CASE("png io round trips and palette retrieval", "[data]") {
  fs::path dir = fs::temp_directory_path() / "dbtanet_png_test";
  fs::create_directories(dir);
  Rng rng(7);
  std::vector<uint8_t> rgb(12 * 10 * 3);
  for (auto& b : rgb) b = uint8_t(rng.uniform_int(0, 255));
  write_png_rgb((dir / "a.png").string(), 12, 10, rgb);
  ImageU8 back = read_png_rgb((dir / "a.png").string());
  REQUIRE(back.w == 12);
  REQUIRE(back.h == 10);
  REQUIRE(back.pixels == rgb);

  std::vector<uint8_t> gray(9 * 9);
  for (auto& b : gray) b = uint8_t(rng.uniform_int(0, 4));
  write_png_gray((dir / "g.png").string(), 9, 9, gray);
  REQUIRE(read_png_index((dir / "g.png").string()).pixels == gray);

  auto palette = class_palette(5);
  write_png_palette((dir / "p.png").string(), 9, 9, gray, palette);
  ImageU8 idx = read_png_index((dir / "p.png").string());
  REQUIRE(idx.pixels == gray);
  REQUIRE(read_png_plte((dir / "p.png").string()) == palette);

  REQUIRE_THROWS_AS(read_png_rgb((dir / "missing.png").string()), ValidationError);
  REQUIRE_THROWS_AS(read_png_index((dir / "a.png").string()), ValidationError);
  fs::remove_all(dir);
}

TEST_CASE("class palette is deterministic with black no-change", "[data]") {
  auto p = class_palette(6);
  REQUIRE(p[0] == std::array<uint8_t, 3>{0, 0, 0});
  for (size_t i = 1; i < p.size(); ++i)
    for (size_t j = i + 1; j < p.size(); ++j) REQUIRE(p[i] != p[j]);
  REQUIRE(class_palette(6) == p);
}
