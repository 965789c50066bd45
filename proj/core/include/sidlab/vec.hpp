#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <vector>

namespace sidlab {

using Vec = std::vector<double>;

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

inline double norm_sq(std::span<const double> a) { return dot(a, a); }
inline double norm(std::span<const double> a) { return std::sqrt(norm_sq(a)); }

inline double dist_sq(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s;
}

inline double dist(std::span<const double> a, std::span<const double> b) {
  return std::sqrt(dist_sq(a, b));
}

inline bool all_finite(std::span<const double> a) {
  for (double v : a)
    if (!std::isfinite(v)) return false;
  return true;
}

// x^n for small integer n >= 0.
inline double pow_int(double x, int n) {
  double r = 1.0;
  double b = x;
  for (int e = n; e > 0; e >>= 1) {
    if (e & 1) r *= b;
    b *= b;
  }
  return r;
}

// Compensated (Kahan) accumulator; keeps long running sums tight so the
// O(1) fast paths stay within 1e-12 of their direct-summation oracles.
struct KahanSum {
  double sum = 0.0;
  double carry = 0.0;
  void add(double v) {
    const double y = v - carry;
    const double t = sum + y;
    carry = (t - sum) - y;
    sum = t;
  }
  double value() const { return sum; }
  void reset() { sum = carry = 0.0; }
};

}  // namespace sidlab
