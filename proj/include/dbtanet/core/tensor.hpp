#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dbtanet {

// Thrown for invalid user input: bad shapes, bad config values, malformed
// files. The CLI maps this to exit code 1.
class ValidationError : public std::runtime_error {
 public:
  explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

// Thrown when a run fails mid-flight (non-finite loss, I/O failure during
// training). The CLI maps this to exit code 2.
class TrainingError : public std::runtime_error {
 public:
  explicit TrainingError(const std::string& what) : std::runtime_error(what) {}
};

using Shape = std::vector<int>;

inline int64_t numel(const Shape& s) {
  int64_t n = 1;
  for (int d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? "," : "") << s[i];
  os << "]";
  return os.str();
}

template <typename T>
struct TensorImpl {
  Shape shape;
  std::vector<T> data;
  std::vector<T> grad;  // allocated lazily, same length as data
  bool requires_grad = false;
};

// Shared-storage dense tensor, NCHW layout for rank-4 feature maps.
// Copies are shallow; clone() copies storage.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, bool requires_grad = false)
      : p_(std::make_shared<TensorImpl<T>>()) {
    for (int d : shape) {
      if (d < 0) throw ValidationError("tensor dimension must be non-negative, got " + shape_str(shape));
    }
    p_->shape = std::move(shape);
    p_->data.assign(static_cast<size_t>(numel(p_->shape)), T(0));
    p_->requires_grad = requires_grad;
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }

  static Tensor full(Shape shape, T value) {
    Tensor t(std::move(shape));
    std::fill(t.p_->data.begin(), t.p_->data.end(), value);
    return t;
  }

  static Tensor scalar(T value, bool requires_grad = false) {
    Tensor t(Shape{1}, requires_grad);
    t.data()[0] = value;
    return t;
  }

  bool defined() const { return static_cast<bool>(p_); }

  const Shape& shape() const { return p_->shape; }
  int ndim() const { return static_cast<int>(p_->shape.size()); }
  int dim(int i) const { return p_->shape[static_cast<size_t>(i)]; }
  int64_t size() const { return static_cast<int64_t>(p_->data.size()); }

  // Tensor is a shared handle: const applies to the handle, not the
  // storage, so accessors stay const-callable from captured copies.
  T* data() const { return p_->data.data(); }
  std::vector<T>& vec() const { return p_->data; }

  bool requires_grad() const { return p_ && p_->requires_grad; }
  void set_requires_grad(bool v) const {
    p_->requires_grad = v;
    if (!v) p_->grad.clear();
  }

  // Gradient buffer, allocated (zeroed) on first use.
  T* grad() const {
    if (p_->grad.size() != p_->data.size()) p_->grad.assign(p_->data.size(), T(0));
    return p_->grad.data();
  }
  bool has_grad() const { return p_ && p_->grad.size() == p_->data.size(); }
  void zero_grad() const {
    if (!p_->grad.empty()) std::fill(p_->grad.begin(), p_->grad.end(), T(0));
  }

  Tensor clone() const {
    Tensor t;
    t.p_ = std::make_shared<TensorImpl<T>>();
    t.p_->shape = p_->shape;
    t.p_->data = p_->data;
    t.p_->requires_grad = false;
    return t;
  }

  T item() const {
    if (size() != 1) throw ValidationError("item() on non-scalar tensor " + shape_str(shape()));
    return p_->data[0];
  }

  bool same_shape(const Tensor& o) const { return p_->shape == o.p_->shape; }

  // Identity of the underlying storage, used by optimizers and registries.
  const void* id() const { return p_.get(); }

 private:
  std::shared_ptr<TensorImpl<T>> p_;
};

template <typename T>
inline bool all_finite(const Tensor<T>& t) {
  for (int64_t i = 0; i < t.size(); ++i)
    if (!std::isfinite(t.data()[i])) return false;
  return true;
}

template <typename T>
inline void require_same_shape(const Tensor<T>& a, const Tensor<T>& b, const char* op) {
  if (!a.same_shape(b))
    throw ValidationError(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                          " vs " + shape_str(b.shape()));
}

// Reverse-mode tape. Constructing a Tape makes it current for the thread;
// ops record backward closures onto it in forward order. backward() replays
// them in reverse, which is a valid topological order for a graph built
// sequentially. With no tape active, ops run inference-only.
template <typename T>
class Tape {
 public:
  Tape() : prev_(current_) { current_ = this; }
  ~Tape() { current_ = prev_; }
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  static bool active() { return current_ != nullptr; }
  static Tape* current() { return current_; }

  void record(std::function<void()> fn) { nodes_.push_back(std::move(fn)); }

  void backward(Tensor<T>& loss) {
    if (loss.size() != 1) throw ValidationError("backward() expects a scalar loss");
    loss.grad()[0] = T(1);
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) (*it)();
  }

  size_t num_nodes() const { return nodes_.size(); }

 private:
  std::vector<std::function<void()>> nodes_;
  Tape* prev_ = nullptr;
  static thread_local Tape* current_;
};

template <typename T>
thread_local Tape<T>* Tape<T>::current_ = nullptr;

template <typename T>
inline bool grad_needed(const Tensor<T>& a) {
  return Tape<T>::active() && a.requires_grad();
}

// Counter-free deterministic RNG. Normal variates use Box-Muller on top of
// the raw 64-bit stream so results do not depend on libstdc++'s
// distribution internals.
class Rng {
 public:
  explicit Rng(uint64_t seed) : gen_(seed) {}

  uint64_t next_u64() { return gen_(); }

  double uniform() {  // [0,1)
    return static_cast<double>(gen_() >> 11) * 0x1.0p-53;
  }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  int uniform_int(int lo, int hi) {  // inclusive range
    if (hi < lo) throw ValidationError("uniform_int: empty range");
    uint64_t span = static_cast<uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(gen_() % span);
  }

  double normal() {
    double u1 = 0.0;
    do { u1 = uniform(); } while (u1 <= 1e-300);
    double u2 = uniform();
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
  }

  double normal(double mean, double stddev) { return mean + stddev * normal(); }

  std::mt19937_64& engine() { return gen_; }

 private:
  std::mt19937_64 gen_;
};

template <typename T>
inline void fill_normal(Tensor<T>& t, Rng& rng, double mean, double stddev) {
  for (int64_t i = 0; i < t.size(); ++i) t.data()[i] = static_cast<T>(rng.normal(mean, stddev));
}

// FNV-1a over the raw bytes, used for parameter checksums.
inline uint64_t fnv1a(const void* bytes, size_t n, uint64_t h = 1469598103934665603ull) {
  const unsigned char* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 1099511628211ull;
  }
  return h;
}

}  // namespace dbtanet
