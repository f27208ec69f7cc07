#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "dbtanet/data/png_io.hpp"
#include "dbtanet/data/synth.hpp"

namespace dbtanet {

namespace fs = std::filesystem;

// On-disk layout: root/im1/<stem>.png, root/im2/<stem>.png,
// root/label1/<stem>.png, root/label2/<stem>.png. Images 8-bit RGB, labels
// 8-bit single-channel with pixel value = class index.

template <typename T>
inline std::vector<uint8_t> image_to_bytes(const Tensor<T>& img) {
  int H = img.dim(1), W = img.dim(2);
  int64_t HW = int64_t(H) * W;
  std::vector<uint8_t> out(size_t(HW) * 3);
  for (int64_t p = 0; p < HW; ++p)
    for (int ch = 0; ch < 3; ++ch) {
      double v = std::clamp(double(img.data()[ch * HW + p]), 0.0, 1.0);
      out[size_t(p) * 3 + ch] = static_cast<uint8_t>(std::lround(v * 255.0));
    }
  return out;
}

template <typename T>
inline Tensor<T> image_from_bytes(const ImageU8& img) {
  Tensor<T> out(Shape{3, img.h, img.w});
  int64_t HW = int64_t(img.h) * img.w;
  for (int64_t p = 0; p < HW; ++p)
    for (int ch = 0; ch < 3; ++ch)
      out.data()[ch * HW + p] = static_cast<T>(img.pixels[size_t(p) * 3 + ch] / 255.0);
  return out;
}

template <typename T>
void save_sample(const std::string& root, const std::string& stem,
                 const BiTemporalSample<T>& s) {
  for (const char* sub : {"im1", "im2", "label1", "label2"})
    fs::create_directories(fs::path(root) / sub);
  int H = s.label_t1.h, W = s.label_t1.w;
  write_png_rgb((fs::path(root) / "im1" / (stem + ".png")).string(), W, H,
                image_to_bytes(s.image_t1));
  write_png_rgb((fs::path(root) / "im2" / (stem + ".png")).string(), W, H,
                image_to_bytes(s.image_t2));
  auto labels_to_bytes = [](const IntMap& m) {
    std::vector<uint8_t> b(m.v.size());
    for (size_t i = 0; i < m.v.size(); ++i) b[i] = static_cast<uint8_t>(m.v[i]);
    return b;
  };
  write_png_gray((fs::path(root) / "label1" / (stem + ".png")).string(), W, H,
                 labels_to_bytes(s.label_t1));
  write_png_gray((fs::path(root) / "label2" / (stem + ".png")).string(), W, H,
                 labels_to_bytes(s.label_t2));
}

inline std::vector<std::string> dataset_stems(const std::string& root) {
  fs::path im1 = fs::path(root) / "im1";
  if (!fs::is_directory(im1))
    throw ValidationError("dataset root has no im1/ directory: " + root);
  std::vector<std::string> stems;
  for (const auto& e : fs::directory_iterator(im1))
    if (e.path().extension() == ".png") stems.push_back(e.path().stem().string());
  std::sort(stems.begin(), stems.end());
  return stems;
}

// Loads every pair under root. Change and boundary masks are derived from
// the labels, never read from disk.
template <typename T>
std::vector<BiTemporalSample<T>> load_dataset(const std::string& root, int classes) {
  std::vector<BiTemporalSample<T>> out;
  for (const std::string& stem : dataset_stems(root)) {
    BiTemporalSample<T> s;
    auto need = [&](const char* sub) {
      fs::path p = fs::path(root) / sub / (stem + ".png");
      if (!fs::exists(p))
        throw ValidationError("dataset pair '" + stem + "' is missing " + sub + "/" + stem +
                              ".png");
      return p.string();
    };
    ImageU8 im1 = read_png_rgb(need("im1"));
    ImageU8 im2 = read_png_rgb(need("im2"));
    ImageU8 l1 = read_png_index(need("label1"));
    ImageU8 l2 = read_png_index(need("label2"));
    if (im1.h != im2.h || im1.w != im2.w || im1.h != l1.h || im1.w != l1.w || l1.h != l2.h ||
        l1.w != l2.w)
      throw ValidationError("dataset pair '" + stem + "' has mismatched sizes");
    auto to_map = [&](const ImageU8& img) {
      IntMap m(img.h, img.w);
      for (int64_t i = 0; i < m.size(); ++i) {
        int v = img.pixels[size_t(i)];
        if (v >= classes)
          throw ValidationError("dataset pair '" + stem + "' has label index " +
                                std::to_string(v) + " >= classes=" + std::to_string(classes));
        m.v[size_t(i)] = v;
      }
      return m;
    };
    s.image_t1 = image_from_bytes<T>(im1);
    s.image_t2 = image_from_bytes<T>(im2);
    s.label_t1 = to_map(l1);
    s.label_t2 = to_map(l2);
    s.change = change_mask(s.label_t1, s.label_t2);
    s.boundary = boundary_target(s.label_t1, s.label_t2);
    out.push_back(std::move(s));
  }
  return out;
}

// ---------------------------------------------------------------------------
// Paired augmentation: a seeded choice from the label-exact subset of D4
// transforms, applied identically to images, labels and masks.
// ---------------------------------------------------------------------------

enum class D4Op { Identity, FlipH, FlipV, Rot90, Rot180, Rot270 };

inline D4Op sample_augment_op(uint64_t seed) {
  Rng rng(seed * 0xbf58476d1ce4e5b9ull + 0x94d049bb133111ebull);
  return static_cast<D4Op>(rng.uniform_int(0, 5));
}

inline D4Op d4_inverse(D4Op op) {
  switch (op) {
    case D4Op::Rot90: return D4Op::Rot270;
    case D4Op::Rot270: return D4Op::Rot90;
    default: return op;  // identity, flips and 180 are involutions
  }
}

namespace detail {

// Rot90 is clockwise: out(r, c) = in(H-1-c, r).
template <typename Get, typename Set>
void transform_grid(int H, int W, D4Op op, Get get, Set set) {
  switch (op) {
    case D4Op::Identity:
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) set(r, c, get(r, c));
      break;
    case D4Op::FlipH:
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) set(r, c, get(r, W - 1 - c));
      break;
    case D4Op::FlipV:
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) set(r, c, get(H - 1 - r, c));
      break;
    case D4Op::Rot90:
      for (int r = 0; r < W; ++r)
        for (int c = 0; c < H; ++c) set(r, c, get(H - 1 - c, r));
      break;
    case D4Op::Rot180:
      for (int r = 0; r < H; ++r)
        for (int c = 0; c < W; ++c) set(r, c, get(H - 1 - r, W - 1 - c));
      break;
    case D4Op::Rot270:
      for (int r = 0; r < W; ++r)
        for (int c = 0; c < H; ++c) set(r, c, get(c, W - 1 - r));
      break;
  }
}

inline bool swaps_axes(D4Op op) { return op == D4Op::Rot90 || op == D4Op::Rot270; }

}  // namespace detail

inline IntMap apply_d4(const IntMap& m, D4Op op) {
  IntMap out(detail::swaps_axes(op) ? m.w : m.h, detail::swaps_axes(op) ? m.h : m.w);
  detail::transform_grid(
      m.h, m.w, op, [&](int r, int c) { return m.at(r, c); },
      [&](int r, int c, int v) { out.at(r, c) = v; });
  return out;
}

template <typename T>
Tensor<T> apply_d4(const Tensor<T>& img, D4Op op) {
  int C = img.dim(0), H = img.dim(1), W = img.dim(2);
  Tensor<T> out(Shape{C, detail::swaps_axes(op) ? W : H, detail::swaps_axes(op) ? H : W});
  int64_t HW = int64_t(H) * W;
  int64_t out_hw = int64_t(out.dim(1)) * out.dim(2);
  for (int ch = 0; ch < C; ++ch) {
    const T* src = img.data() + ch * HW;
    T* dst = out.data() + ch * out_hw;
    int ow = out.dim(2);
    detail::transform_grid(
        H, W, op, [&](int r, int c) { return src[int64_t(r) * W + c]; },
        [&](int r, int c, T v) { dst[int64_t(r) * ow + c] = v; });
  }
  return out;
}

template <typename T>
BiTemporalSample<T> apply_d4(const BiTemporalSample<T>& s, D4Op op) {
  BiTemporalSample<T> out;
  out.image_t1 = apply_d4(s.image_t1, op);
  out.image_t2 = apply_d4(s.image_t2, op);
  out.label_t1 = apply_d4(s.label_t1, op);
  out.label_t2 = apply_d4(s.label_t2, op);
  out.change = apply_d4(s.change, op);
  out.boundary = apply_d4(s.boundary, op);
  return out;
}

template <typename T>
BiTemporalSample<T> augment(const BiTemporalSample<T>& s, uint64_t seed) {
  D4Op op = sample_augment_op(seed);
  // quarter turns change the raster shape of non-square samples; remap them
  // to flips so batches keep one size
  if (s.label_t1.h != s.label_t1.w) {
    if (op == D4Op::Rot90) op = D4Op::FlipH;
    if (op == D4Op::Rot270) op = D4Op::FlipV;
  }
  return apply_d4(s, op);
}

}  // namespace dbtanet
