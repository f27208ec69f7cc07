#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <vector>

namespace dbtanet {

namespace detail {

inline std::array<uint8_t, 3> hsv_to_rgb(double h, double s, double v) {
  h = std::fmod(h, 360.0);
  if (h < 0) h += 360.0;
  double c = v * s;
  double x = c * (1.0 - std::abs(std::fmod(h / 60.0, 2.0) - 1.0));
  double m = v - c;
  double r = 0, g = 0, b = 0;
  if (h < 60) { r = c; g = x; }
  else if (h < 120) { r = x; g = c; }
  else if (h < 180) { g = c; b = x; }
  else if (h < 240) { g = x; b = c; }
  else if (h < 300) { r = x; b = c; }
  else { r = c; b = x; }
  auto q = [&](double u) { return static_cast<uint8_t>(std::lround(255.0 * (u + m))); };
  return {q(r), q(g), q(b)};
}

}  // namespace detail

// Rendering palette for class maps: class 0 (no change) is black, the
// remaining classes take well-separated golden-angle hues. Deterministic, so
// predictions rendered anywhere use the same colors the datasets use.
inline std::vector<std::array<uint8_t, 3>> class_palette(int classes) {
  std::vector<std::array<uint8_t, 3>> p(static_cast<size_t>(classes));
  p[0] = {0, 0, 0};
  for (int c = 1; c < classes; ++c)
    p[size_t(c)] = detail::hsv_to_rgb(30.0 + 137.50776 * (c - 1), 0.78, 0.95);
  return p;
}

// Scene appearance colors for the synthetic generator, in [0,1]. Distinct
// from the label palette: the background is a muted gray-green and classes
// get softer tones an encoder can learn from.
inline std::array<double, 3> scene_color(int cls) {
  if (cls == 0) return {0.32, 0.36, 0.30};
  auto rgb = detail::hsv_to_rgb(200.0 + 137.50776 * (cls - 1), 0.55, 0.82);
  return {rgb[0] / 255.0, rgb[1] / 255.0, rgb[2] / 255.0};
}

}  // namespace dbtanet
