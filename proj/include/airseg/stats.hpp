#pragma once

#include "airseg/common.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace airseg {

inline double mean(const std::vector<double>& v) {
  if (v.empty()) throw Error("mean: empty sample");
  double s = 0.0;
  for (double x : v) s += x;
  return s / static_cast<double>(v.size());
}

/// Sample standard deviation (n-1 denominator). Zero for samples of size < 2.
inline double sample_sd(const std::vector<double>& v) {
  const auto n = v.size();
  if (n < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(n - 1));
}

/// Quantile with linear interpolation between order statistics
/// (h = (n-1)p, interpolate between floor(h) and floor(h)+1).
/// `sorted` must be ascending and non-empty; p in [0, 1].
inline double quantile_sorted(const std::vector<double>& sorted, double p) {
  if (sorted.empty()) throw Error("quantile: empty sample");
  if (p < 0.0 || p > 1.0) throw Error("quantile: p outside [0, 1]");
  const auto n = sorted.size();
  if (n == 1) return sorted[0];
  const double h = static_cast<double>(n - 1) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= n) return sorted[n - 1];
  const double frac = h - static_cast<double>(lo);
  return sorted[lo] + frac * (sorted[lo + 1] - sorted[lo]);
}

inline double quantile(std::vector<double> v, double p) {
  std::sort(v.begin(), v.end());
  return quantile_sorted(v, p);
}

}  // namespace airseg
