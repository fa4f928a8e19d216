#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace ctxnlg {

/// Dense row-major tensor of doubles. Rank 1 and 2 cover everything here.
struct Tensor {
  std::vector<int> shape;
  std::vector<double> values;

  Tensor() = default;
  Tensor(std::vector<int> s, std::vector<double> v)
      : shape(std::move(s)), values(std::move(v)) {
    if (static_cast<std::int64_t>(values.size()) != numel_of(shape))
      throw std::invalid_argument("Tensor: shape/value size mismatch");
  }

  static std::int64_t numel_of(const std::vector<int>& s) {
    std::int64_t n = 1;
    for (int e : s) {
      if (e <= 0) throw std::invalid_argument("Tensor: non-positive extent");
      n *= e;
    }
    return n;
  }

  static Tensor zeros(std::vector<int> s) {
    std::int64_t n = numel_of(s);
    return Tensor(std::move(s), std::vector<double>(n, 0.0));
  }
  static Tensor scalar(double v) { return Tensor({1}, {v}); }
  static Tensor vec(std::vector<double> v) {
    int n = static_cast<int>(v.size());
    return Tensor({n}, std::move(v));
  }

  std::int64_t numel() const { return static_cast<std::int64_t>(values.size()); }
  int rank() const { return static_cast<int>(shape.size()); }
  int rows() const { return shape.at(0); }
  int cols() const { return shape.at(1); }

  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }
  double& at2(int r, int c) { return values[static_cast<std::size_t>(r) * cols() + c]; }
  double at2(int r, int c) const { return values[static_cast<std::size_t>(r) * cols() + c]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }

  bool all_finite() const {
    for (double v : values)
      if (!std::isfinite(v)) return false;
    return true;
  }

  void fill(double v) { std::fill(values.begin(), values.end(), v); }

  std::string shape_str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
    os << ']';
    return os.str();
  }
};

/// Deterministic RNG. Uniform doubles are derived from the raw 64-bit
/// stream directly so sequences do not depend on the standard library's
/// distribution implementations.
class Rng {
 public:
  explicit Rng(std::uint64_t seed) : eng_(seed) {}

  std::uint64_t next_u64() { return eng_(); }

  /// [0, 1)
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// [0, n)
  int next_int(int n) {
    return static_cast<int>(uniform() * static_cast<double>(n));
  }

  void fill_uniform(Tensor& t, double lo, double hi) {
    for (double& v : t.values) v = uniform(lo, hi);
  }

  template <typename T>
  void shuffle(std::vector<T>& v) {
    for (std::size_t i = v.size(); i > 1; --i)
      std::swap(v[i - 1], v[next_int(static_cast<int>(i))]);
  }

 private:
  std::mt19937_64 eng_;
};

/// Stable seed derivation for independent sub-streams (per model, per pass).
inline std::uint64_t derive_seed(std::uint64_t seed, std::string_view tag) {
  std::uint64_t h = 1469598103934665603ull ^ seed;
  for (char c : tag) {
    h ^= static_cast<unsigned char>(c);
    h *= 1099511628211ull;
  }
  return h;
}

// Low-level kernels shared by the tape ops and the inference-only path.
namespace kern {

/// Dot product with an explicitly vectorizable reduction; the row-vector
/// reductions below are latency-bound on one accumulator chain otherwise.
inline double dot_unrolled(const double* __restrict a,
                           const double* __restrict b, int n) {
  double s = 0.0;
#pragma omp simd reduction(+ : s)
  for (int j = 0; j < n; ++j) s += a[j] * b[j];
  return s;
}

/// out = W x, W is [r, c], x has c elements.
inline void matvec(const Tensor& w, const double* __restrict x,
                   double* __restrict out) {
  const int r = w.rows(), c = w.cols();
  const double* __restrict wp = w.values.data();
  for (int i = 0; i < r; ++i)
    out[i] = dot_unrolled(wp + static_cast<std::size_t>(i) * c, x, c);
}

/// out += W x + b (b may be null).
inline void matvec_add_acc(const Tensor& w, const double* __restrict x,
                           const double* __restrict b, double* __restrict out) {
  const int r = w.rows(), c = w.cols();
  const double* __restrict wp = w.values.data();
  for (int i = 0; i < r; ++i)
    out[i] += dot_unrolled(wp + static_cast<std::size_t>(i) * c, x, c) +
              (b ? b[i] : 0.0);
}

/// dx += W^T g (streams W row-wise).
inline void matvec_t_acc(const Tensor& w, const double* __restrict g,
                         double* __restrict dx) {
  const int r = w.rows(), c = w.cols();
  const double* __restrict wp = w.values.data();
  for (int i = 0; i < r; ++i) {
    const double gi = g[i];
    const double* __restrict row = wp + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j) dx[j] += row[j] * gi;
  }
}

/// dW += g x^T
inline void outer_acc(const double* __restrict g, int r,
                      const double* __restrict x, int c,
                      double* __restrict dw) {
  for (int i = 0; i < r; ++i) {
    const double gi = g[i];
    double* __restrict row = dw + static_cast<std::size_t>(i) * c;
    for (int j = 0; j < c; ++j) row[j] += gi * x[j];
  }
}

inline double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logsumexp(const double* x, int n) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) s += std::exp(x[i] - m);
  return m + std::log(s);
}

/// Max-subtraction softmax.
inline void softmax(const double* x, int n, double* out) {
  double m = x[0];
  for (int i = 1; i < n; ++i) m = std::max(m, x[i]);
  double s = 0.0;
  for (int i = 0; i < n; ++i) {
    out[i] = std::exp(x[i] - m);
    s += out[i];
  }
  double inv = 1.0 / s;
  for (int i = 0; i < n; ++i) out[i] *= inv;
}

}  // namespace kern
}  // namespace ctxnlg
