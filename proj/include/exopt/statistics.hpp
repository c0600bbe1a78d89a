#pragma once

// Two-sided permutation test, coefficient of variation and 1.5 IQR outlier
// rule.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "exopt/errors.hpp"

namespace exopt::stats {

inline double mean(std::span<const double> x) {
  if (x.empty()) throw ValidationError("samples", "must be non-empty");
  return std::accumulate(x.begin(), x.end(), 0.0) / static_cast<double>(x.size());
}

// Sample standard deviation (n - 1); zero for a single sample.
inline double stddev(std::span<const double> x) {
  const double m = mean(x);
  if (x.size() < 2) return 0.0;
  double ss = 0.0;
  for (double v : x) ss += (v - m) * (v - m);
  return std::sqrt(ss / static_cast<double>(x.size() - 1));
}

class ZeroMeanError : public ValidationError {
 public:
  ZeroMeanError() : ValidationError("samples", "coefficient of variation undefined for zero mean") {}
};

inline double cv(std::span<const double> x) {
  const double m = mean(x);
  if (m == 0.0) throw ZeroMeanError();
  return stddev(x) / m;
}

// Linear-interpolation quantile (Hyndman-Fan type 7).
inline double quantile(std::span<const double> x, double p) {
  if (x.empty()) throw ValidationError("samples", "must be non-empty");
  std::vector<double> s(x.begin(), x.end());
  std::sort(s.begin(), s.end());
  const double h = (static_cast<double>(s.size()) - 1.0) * std::clamp(p, 0.0, 1.0);
  const auto lo = static_cast<std::size_t>(std::floor(h));
  const std::size_t hi = std::min(lo + 1, s.size() - 1);
  return s[lo] + (h - static_cast<double>(lo)) * (s[hi] - s[lo]);
}

inline double median(std::span<const double> x) { return quantile(x, 0.5); }

struct Fences {
  double q1 = 0.0, q3 = 0.0, iqr = 0.0, lower = 0.0, upper = 0.0;
};

inline Fences iqr_fences(std::span<const double> x, double k = 1.5) {
  Fences f;
  f.q1 = quantile(x, 0.25);
  f.q3 = quantile(x, 0.75);
  f.iqr = f.q3 - f.q1;
  f.lower = f.q1 - k * f.iqr;
  f.upper = f.q3 + k * f.iqr;
  return f;
}

inline std::vector<bool> iqr_outliers(std::span<const double> x, double k = 1.5) {
  const Fences f = iqr_fences(x, k);
  std::vector<bool> out;
  out.reserve(x.size());
  for (double v : x) out.push_back(v < f.lower || v > f.upper);
  return out;
}

struct Summary {
  double mean = 0.0, stddev = 0.0, median = 0.0, q1 = 0.0, q3 = 0.0, iqr = 0.0;
};

inline Summary summarize(std::span<const double> x) {
  Summary s;
  s.mean = mean(x);
  s.stddev = stddev(x);
  const Fences f = iqr_fences(x);
  s.median = median(x);
  s.q1 = f.q1;
  s.q3 = f.q3;
  s.iqr = f.iqr;
  return s;
}

// Two-sided permutation test on the difference of means,
//   p = (1 + #{|perm diff| >= |observed diff|}) / (n_perm + 1).
// The pooled sample is sorted and the smaller group is the one drawn, so the
// result does not depend on argument order.
inline double permutation_test(std::span<const double> a, std::span<const double> b, std::size_t n_perm,
                               std::uint64_t seed) {
  if (a.empty() || b.empty()) throw ValidationError("samples", "both groups must be non-empty");
  if (n_perm < 1000) throw ValidationError("n_perm", "must be >= 1000");
  std::vector<double> pooled(a.begin(), a.end());
  pooled.insert(pooled.end(), b.begin(), b.end());
  std::sort(pooled.begin(), pooled.end());
  const std::size_t n = pooled.size();
  const std::size_t k = std::min(a.size(), b.size());
  const double total = std::accumulate(pooled.begin(), pooled.end(), 0.0);

  auto abs_diff = [&](double group_sum) {
    const double other = total - group_sum;
    return std::abs(group_sum / static_cast<double>(k) - other / static_cast<double>(n - k));
  };
  const double observed = std::abs(mean(a) - mean(b));
  const double tol = 1e-12 * std::max(1.0, std::abs(total) / static_cast<double>(n));

  std::mt19937_64 rng(seed);
  std::vector<std::size_t> idx(n);
  std::size_t extreme = 0;
  for (std::size_t r = 0; r < n_perm; ++r) {
    std::iota(idx.begin(), idx.end(), 0);
    double s = 0.0;
    // partial Fisher-Yates: the first k slots form the drawn group
    for (std::size_t i = 0; i < k; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, n - 1);
      std::swap(idx[i], idx[pick(rng)]);
      s += pooled[idx[i]];
    }
    if (abs_diff(s) >= observed - tol) ++extreme;
  }
  return (1.0 + static_cast<double>(extreme)) / (static_cast<double>(n_perm) + 1.0);
}

}  // namespace exopt::stats
