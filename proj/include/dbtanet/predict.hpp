#pragma once

#include <filesystem>
#include <string>

#include "dbtanet/data/dataset.hpp"
#include "dbtanet/data/palette.hpp"
#include "dbtanet/model.hpp"

namespace dbtanet {

inline constexpr int kCompositeGutter = 4;

struct PredictFiles {
  std::string sem1, sem2, change, boundary, composite;
};

// Runs an eval-mode forward on one image pair and renders the outputs:
// palette PNGs for the masked semantic maps, grayscale probability maps for
// change and boundary, and a 4-panel side-by-side composite.
template <typename T>
PredictFiles predict_to_dir(DbtaNet<T>& model, const Tensor<T>& image_t1,
                            const Tensor<T>& image_t2, const std::string& out_dir,
                            double threshold = 0.5) {
  require_same_shape(image_t1, image_t2, "predict");
  model.set_training(false);
  Tensor<T> b1(Shape{1, 3, image_t1.dim(1), image_t1.dim(2)});
  Tensor<T> b2(b1.shape());
  std::copy(image_t1.data(), image_t1.data() + image_t1.size(), b1.data());
  std::copy(image_t2.data(), image_t2.data() + image_t2.size(), b2.data());
  ModelOutputs<T> out = model.forward(b1, b2);

  int H = b1.dim(2), W = b1.dim(3);
  int64_t HW = int64_t(H) * W;
  const int C = model.config().classes;
  auto palette = class_palette(C);

  std::vector<int> am1 = argmax_channels(out.preds.sem1_logits);
  std::vector<int> am2 = argmax_channels(out.preds.sem2_logits);
  const size_t npix = static_cast<size_t>(HW);
  std::vector<uint8_t> sem1(npix), sem2(npix), change(npix), boundary(npix);
  for (int64_t p = 0; p < HW; ++p) {
    double prob = double(sigmoid_scalar(out.preds.change_logits.data()[p]));
    bool changed = prob >= threshold;
    sem1[size_t(p)] = static_cast<uint8_t>(changed ? am1[size_t(p)] : 0);
    sem2[size_t(p)] = static_cast<uint8_t>(changed ? am2[size_t(p)] : 0);
    change[size_t(p)] = static_cast<uint8_t>(std::lround(255.0 * prob));
    double bprob = double(sigmoid_scalar(out.preds.boundary_logits.data()[p]));
    boundary[size_t(p)] = static_cast<uint8_t>(std::lround(255.0 * bprob));
  }

  std::filesystem::create_directories(out_dir);
  auto path = [&](const char* name) {
    return (std::filesystem::path(out_dir) / name).string();
  };
  PredictFiles files{path("sem1.png"), path("sem2.png"), path("change.png"),
                     path("boundary.png"), path("composite.png")};
  write_png_palette(files.sem1, W, H, sem1, palette);
  write_png_palette(files.sem2, W, H, sem2, palette);
  write_png_gray(files.change, W, H, change);
  write_png_gray(files.boundary, W, H, boundary);

  // Composite: sem1 | sem2 | change | boundary with white gutters.
  int cw = 4 * W + 3 * kCompositeGutter;
  std::vector<uint8_t> comp(size_t(H) * cw * 3, 255);
  auto blit_palette = [&](const std::vector<uint8_t>& idx, int panel) {
    int x0 = panel * (W + kCompositeGutter);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c) {
        const auto& rgb = palette[idx[size_t(r) * W + c]];
        for (int ch = 0; ch < 3; ++ch)
          comp[(size_t(r) * cw + x0 + c) * 3 + ch] = rgb[size_t(ch)];
      }
  };
  auto blit_gray = [&](const std::vector<uint8_t>& g, int panel) {
    int x0 = panel * (W + kCompositeGutter);
    for (int r = 0; r < H; ++r)
      for (int c = 0; c < W; ++c)
        for (int ch = 0; ch < 3; ++ch)
          comp[(size_t(r) * cw + x0 + c) * 3 + ch] = g[size_t(r) * W + c];
  };
  blit_palette(sem1, 0);
  blit_palette(sem2, 1);
  blit_gray(change, 2);
  blit_gray(boundary, 3);
  write_png_rgb(files.composite, cw, H, comp);
  return files;
}

}  // namespace dbtanet
