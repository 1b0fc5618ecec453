#pragma once

#include <boost/math/distributions/students_t.hpp>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "geodesign/error.hpp"

namespace geodesign {

inline double mean(std::span<const double> v) {
  if (v.empty()) return 0.0;
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

/// Sample standard deviation (n - 1 denominator).
inline double stddev(std::span<const double> v) {
  if (v.size() < 2) return 0.0;
  const double m = mean(v);
  double ss = 0.0;
  for (double x : v) ss += (x - m) * (x - m);
  return std::sqrt(ss / static_cast<double>(v.size() - 1));
}

inline double standard_error(std::span<const double> v) {
  return v.empty() ? 0.0 : stddev(v) / std::sqrt(static_cast<double>(v.size()));
}

struct PairedTTest {
  double mean_difference = 0.0;  // mean(b - a)
  double t = 0.0;
  double p_one_sided = 1.0;  // H1: mean(b - a) > 0
  double p_two_sided = 1.0;
};

/// Paired t-test on b - a.
inline PairedTTest paired_t_test(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size() || a.size() < 2) throw InvalidArgument("paired t-test needs two equal samples of size >= 2");
  std::vector<double> diff(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) diff[i] = b[i] - a[i];
  PairedTTest out;
  out.mean_difference = mean(diff);
  const double se = standard_error(diff);
  if (se == 0.0) {
    out.t = out.mean_difference > 0 ? INFINITY : (out.mean_difference < 0 ? -INFINITY : 0.0);
    out.p_one_sided = out.mean_difference > 0 ? 0.0 : 1.0;
    out.p_two_sided = out.mean_difference != 0 ? 0.0 : 1.0;
    return out;
  }
  out.t = out.mean_difference / se;
  const boost::math::students_t dist(static_cast<double>(diff.size() - 1));
  out.p_one_sided = boost::math::cdf(boost::math::complement(dist, out.t));
  out.p_two_sided = 2.0 * boost::math::cdf(boost::math::complement(dist, std::abs(out.t)));
  return out;
}

}  // namespace geodesign
