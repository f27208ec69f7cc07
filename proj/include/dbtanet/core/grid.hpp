#pragma once

#include <cstdint>
#include <vector>

#include "dbtanet/core/tensor.hpp"

namespace dbtanet {

// Dense integer map [H, W], row-major. Used for label maps, change and
// boundary masks, and predicted class maps.
struct IntMap {
  int h = 0;
  int w = 0;
  std::vector<int> v;

  IntMap() = default;
  IntMap(int h_, int w_, int fill = 0) : h(h_), w(w_), v(size_t(h_) * w_, fill) {}

  int& at(int r, int c) { return v[size_t(r) * w + c]; }
  int at(int r, int c) const { return v[size_t(r) * w + c]; }
  int64_t size() const { return int64_t(h) * w; }
  bool same_shape(const IntMap& o) const { return h == o.h && w == o.w; }
  bool operator==(const IntMap& o) const { return h == o.h && w == o.w && v == o.v; }
};

}  // namespace dbtanet
