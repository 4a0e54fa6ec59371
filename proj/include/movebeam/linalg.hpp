#pragma once

#include <cmath>
#include <complex>
#include <stdexcept>
#include <vector>

namespace movebeam {

// In-place inverse of a small dense complex matrix (row-major) via
// Gauss-Jordan with partial pivoting. Returns the infinity-norm condition
// estimate ||A||inf * ||A^-1||inf and throws when it exceeds cond_limit.
inline double invert_complex(std::complex<double>* a, long n, double cond_limit = 1e12) {
  using C = std::complex<double>;
  double norm_a = 0;
  for (long i = 0; i < n; ++i) {
    double row = 0;
    for (long j = 0; j < n; ++j) row += std::abs(a[i * n + j]);
    norm_a = std::max(norm_a, row);
  }
  std::vector<C> inv((size_t)(n * n), C(0, 0));
  for (long i = 0; i < n; ++i) inv[(size_t)(i * n + i)] = C(1, 0);

  for (long col = 0; col < n; ++col) {
    long pivot = col;
    double best = std::abs(a[col * n + col]);
    for (long r = col + 1; r < n; ++r) {
      double v = std::abs(a[r * n + col]);
      if (v > best) {
        best = v;
        pivot = r;
      }
    }
    if (best == 0.0) throw std::runtime_error("invert_complex: singular matrix");
    if (pivot != col) {
      for (long j = 0; j < n; ++j) {
        std::swap(a[col * n + j], a[pivot * n + j]);
        std::swap(inv[(size_t)(col * n + j)], inv[(size_t)(pivot * n + j)]);
      }
    }
    C d = a[col * n + col];
    for (long j = 0; j < n; ++j) {
      a[col * n + j] /= d;
      inv[(size_t)(col * n + j)] /= d;
    }
    for (long r = 0; r < n; ++r) {
      if (r == col) continue;
      C f = a[r * n + col];
      if (f == C(0, 0)) continue;
      for (long j = 0; j < n; ++j) {
        a[r * n + j] -= f * a[col * n + j];
        inv[(size_t)(r * n + j)] -= f * inv[(size_t)(col * n + j)];
      }
    }
  }
  double norm_inv = 0;
  for (long i = 0; i < n; ++i) {
    double row = 0;
    for (long j = 0; j < n; ++j) row += std::abs(inv[(size_t)(i * n + j)]);
    norm_inv = std::max(norm_inv, row);
  }
  double cond = norm_a * norm_inv;
  if (!(cond < cond_limit))
    throw std::runtime_error("invert_complex: matrix numerically singular (cond estimate " +
                             std::to_string(cond) + ")");
  for (long i = 0; i < n * n; ++i) a[i] = inv[(size_t)i];
  return cond;
}

}  // namespace movebeam
