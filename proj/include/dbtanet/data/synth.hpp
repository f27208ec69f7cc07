#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "dbtanet/core/grid.hpp"
#include "dbtanet/core/tensor.hpp"
#include "dbtanet/data/palette.hpp"
#include "dbtanet/losses.hpp"

namespace dbtanet {

template <typename T>
struct BiTemporalSample {
  Tensor<T> image_t1;  // [3, H, W] in [0,1]
  Tensor<T> image_t2;
  IntMap label_t1;  // class index where the epochs differ, 0 elsewhere
  IntMap label_t2;
  IntMap change;    // (label_t1 > 0) OR (label_t2 > 0)
  IntMap boundary;  // boundary_target(label_t1, label_t2)
};

struct SceneSpec {
  int height = 64;
  int width = 64;
  int classes = 5;
  int min_shapes = 4;
  int max_shapes = 8;
  double change_ratio = 0.25;
  double noise_std = 0.03;
  uint64_t seed = 0;

  void validate() const {
    if (height < 16 || width < 16 || height % 16 != 0 || width % 16 != 0)
      throw ValidationError("scene spec: size must be divisible by 16");
    if (classes < 3) throw ValidationError("scene spec: need at least 3 classes");
    if (min_shapes < 0 || max_shapes < min_shapes)
      throw ValidationError("scene spec: bad shape-count range");
    if (!(change_ratio > 0.0 && change_ratio < 1.0))
      throw ValidationError("scene spec: change_ratio must lie in (0,1)");
    if (noise_std < 0.0) throw ValidationError("scene spec: noise_std must be >= 0");
  }
};

namespace detail {

struct SceneShape {
  bool ellipse = false;
  int cy = 0, cx = 0, ry = 1, rx = 1;
  int cls = 1;
};

inline SceneShape random_shape(Rng& rng, const SceneSpec& spec) {
  SceneShape s;
  s.ellipse = rng.uniform() < 0.5;
  int max_r = std::max(3, std::min(spec.height, spec.width) / 6);
  s.ry = rng.uniform_int(3, max_r);
  s.rx = rng.uniform_int(3, max_r);
  s.cy = rng.uniform_int(0, spec.height - 1);
  s.cx = rng.uniform_int(0, spec.width - 1);
  s.cls = rng.uniform_int(1, spec.classes - 1);
  return s;
}

inline void rasterize(const std::vector<SceneShape>& shapes, IntMap& scene) {
  std::fill(scene.v.begin(), scene.v.end(), 0);
  for (const auto& s : shapes) {
    int r0 = std::max(0, s.cy - s.ry), r1 = std::min(scene.h - 1, s.cy + s.ry);
    int c0 = std::max(0, s.cx - s.rx), c1 = std::min(scene.w - 1, s.cx + s.rx);
    for (int r = r0; r <= r1; ++r) {
      for (int c = c0; c <= c1; ++c) {
        if (s.ellipse) {
          double dy = double(r - s.cy) / s.ry;
          double dx = double(c - s.cx) / s.rx;
          if (dy * dy + dx * dx > 1.0) continue;
        }
        scene.at(r, c) = s.cls;
      }
    }
  }
}

inline double diff_fraction(const IntMap& a, const IntMap& b) {
  int64_t d = 0;
  for (int64_t i = 0; i < a.size(); ++i)
    if (a.v[i] != b.v[i]) ++d;
  return double(d) / double(a.size());
}

// Renders a semantic scene to an RGB tensor: fixed per-class base colors, a
// smooth per-epoch illumination plane, and per-pixel Gaussian noise.
template <typename T>
Tensor<T> render_scene(const IntMap& scene, Rng& rng, double noise_std) {
  int H = scene.h, W = scene.w;
  Tensor<T> img(Shape{3, H, W});
  double ga = rng.uniform(-0.06, 0.06);
  double gb = rng.uniform(-0.08, 0.08);
  double gc = rng.uniform(-0.08, 0.08);
  int64_t HW = int64_t(H) * W;
  for (int r = 0; r < H; ++r) {
    for (int c = 0; c < W; ++c) {
      auto base = scene_color(scene.at(r, c));
      double illum = ga + gb * double(r) / H + gc * double(c) / W;
      for (int ch = 0; ch < 3; ++ch) {
        double v = base[size_t(ch)] + illum + rng.normal(0.0, noise_std);
        img.data()[ch * HW + int64_t(r) * W + c] =
            static_cast<T>(std::clamp(v, 0.0, 1.0));
      }
    }
  }
  return img;
}

}  // namespace detail

// Deterministic bi-temporal scene: epoch 1 places random rectangles and
// ellipses, epoch 2 mutates the shape list (class swap, delete, insert)
// until the changed fraction approaches change_ratio. Label maps keep class
// IDs only where the epochs differ.
template <typename T>
BiTemporalSample<T> generate_scene(const SceneSpec& spec) {
  spec.validate();
  Rng rng(spec.seed * 0x9e3779b97f4a7c15ull + 0x2545f4914f6cdd1dull);

  int n_shapes = spec.max_shapes > 0 ? rng.uniform_int(spec.min_shapes, spec.max_shapes) : 0;
  std::vector<detail::SceneShape> shapes1;
  for (int i = 0; i < n_shapes; ++i) shapes1.push_back(detail::random_shape(rng, spec));

  IntMap scene1(spec.height, spec.width);
  detail::rasterize(shapes1, scene1);

  std::vector<detail::SceneShape> shapes2 = shapes1;
  IntMap scene2 = scene1;
  if (spec.max_shapes > 0) {
    IntMap candidate(spec.height, spec.width);
    double frac = 0.0;
    for (int attempt = 0; attempt < 200 && frac < spec.change_ratio - 0.02; ++attempt) {
      auto trial = shapes2;
      int op = rng.uniform_int(0, 2);
      if (op == 0 && !trial.empty()) {  // class swap
        auto& s = trial[size_t(rng.uniform_int(0, int(trial.size()) - 1))];
        int new_cls = rng.uniform_int(1, spec.classes - 1);
        if (new_cls == s.cls) new_cls = 1 + (new_cls % (spec.classes - 1));
        s.cls = new_cls;
      } else if (op == 1 && !trial.empty()) {  // delete
        trial.erase(trial.begin() + rng.uniform_int(0, int(trial.size()) - 1));
      } else {  // insert
        trial.push_back(detail::random_shape(rng, spec));
      }
      detail::rasterize(trial, candidate);
      double f = detail::diff_fraction(scene1, candidate);
      if (f <= spec.change_ratio + 0.10 && f >= frac) {
        shapes2 = std::move(trial);
        scene2.v = candidate.v;
        frac = f;
      }
    }
  }

  BiTemporalSample<T> sample;
  sample.label_t1 = IntMap(spec.height, spec.width);
  sample.label_t2 = IntMap(spec.height, spec.width);
  for (int64_t i = 0; i < scene1.size(); ++i) {
    if (scene1.v[i] != scene2.v[i]) {
      sample.label_t1.v[i] = scene1.v[i];
      sample.label_t2.v[i] = scene2.v[i];
    }
  }
  sample.change = change_mask(sample.label_t1, sample.label_t2);
  sample.boundary = boundary_target(sample.label_t1, sample.label_t2);
  sample.image_t1 = detail::render_scene<T>(scene1, rng, spec.noise_std);
  sample.image_t2 = detail::render_scene<T>(scene2, rng, spec.noise_std);
  return sample;
}

}  // namespace dbtanet
