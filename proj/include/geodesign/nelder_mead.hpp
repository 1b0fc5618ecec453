#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>
#include <vector>

namespace geodesign {

struct SimplexOptions {
  double initial_step = 0.5;
  double relative_tolerance = 1e-8;  // on the spread of function values
  double size_tolerance = 1e-6;      // on the largest vertex distance from the best
  int max_evaluations = 2000;
};

struct SimplexResult {
  Eigen::VectorXd argmin;
  double minimum = std::numeric_limits<double>::infinity();
  int evaluations = 0;
  bool converged = false;
};

/// Derivative-free Nelder-Mead minimization. The objective may return +inf
/// to reject a point; the starting point must be finite. The returned
/// minimum is never worse than the value at the start.
inline SimplexResult nelder_mead(const std::function<double(const Eigen::VectorXd&)>& f,
                                 const Eigen::VectorXd& start, const SimplexOptions& opt = {}) {
  const Eigen::Index d = start.size();
  std::vector<Eigen::VectorXd> pts;
  std::vector<double> vals;
  SimplexResult res;

  auto eval = [&](const Eigen::VectorXd& x) {
    ++res.evaluations;
    const double v = f(x);
    return std::isnan(v) ? std::numeric_limits<double>::infinity() : v;
  };

  pts.push_back(start);
  vals.push_back(eval(start));
  for (Eigen::Index i = 0; i < d; ++i) {
    Eigen::VectorXd p = start;
    p[i] += opt.initial_step;
    pts.push_back(p);
    vals.push_back(eval(p));
  }

  std::vector<std::size_t> order(pts.size());
  auto sort_simplex = [&] {
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return vals[a] < vals[b]; });
    std::vector<Eigen::VectorXd> p2;
    std::vector<double> v2;
    for (auto k : order) {
      p2.push_back(pts[k]);
      v2.push_back(vals[k]);
    }
    pts.swap(p2);
    vals.swap(v2);
  };

  while (true) {
    sort_simplex();
    const double best = vals.front();
    const double worst = vals.back();
    double size = 0.0;
    for (std::size_t k = 1; k < pts.size(); ++k) size = std::max(size, (pts[k] - pts[0]).norm());
    const bool flat = std::isfinite(worst) &&
                      std::abs(worst - best) <= opt.relative_tolerance * (std::abs(best) + 1e-12);
    if (flat && size <= opt.size_tolerance) {
      res.converged = true;
      break;
    }
    if (res.evaluations >= opt.max_evaluations) break;

    Eigen::VectorXd centroid = Eigen::VectorXd::Zero(d);
    for (std::size_t k = 0; k + 1 < pts.size(); ++k) centroid += pts[k];
    centroid /= static_cast<double>(d);

    const Eigen::VectorXd reflected = centroid + (centroid - pts.back());
    const double fr = eval(reflected);
    if (fr < vals.front()) {
      const Eigen::VectorXd expanded = centroid + 2.0 * (centroid - pts.back());
      const double fe = eval(expanded);
      if (fe < fr) {
        pts.back() = expanded;
        vals.back() = fe;
      } else {
        pts.back() = reflected;
        vals.back() = fr;
      }
      continue;
    }
    if (fr < vals[vals.size() - 2]) {
      pts.back() = reflected;
      vals.back() = fr;
      continue;
    }
    const bool outside = fr < vals.back();
    const Eigen::VectorXd contracted =
        outside ? Eigen::VectorXd(centroid + 0.5 * (reflected - centroid))
                : Eigen::VectorXd(centroid + 0.5 * (pts.back() - centroid));
    const double fc = eval(contracted);
    if (fc < (outside ? fr : vals.back())) {
      pts.back() = contracted;
      vals.back() = fc;
      continue;
    }
    for (std::size_t k = 1; k < pts.size(); ++k) {
      pts[k] = pts[0] + 0.5 * (pts[k] - pts[0]);
      vals[k] = eval(pts[k]);
    }
  }

  res.argmin = pts.front();
  res.minimum = vals.front();
  return res;
}

}  // namespace geodesign
