#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <optional>
#include <string>
#include <vector>

#include "geodesign/likelihood.hpp"
#include "geodesign/nelder_mead.hpp"

namespace geodesign {

struct FitOptions {
  std::size_t min_observations = 20;
  int max_evaluations = 2000;  // per restart
  double relative_tolerance = 1e-8;
  double size_tolerance = 1e-6;
  NuggetMode nugget_mode = NuggetMode::kConstant;
  bool estimate_nugget = true;
  bool default_starts = true;
  /// Extra starting points; only their phi and tau2/sigma2 ratio matter
  /// because beta and sigma2 are profiled.
  std::vector<ModelSpec> starts;
  /// Scale for the default range guesses; bounding-box diameter of the data
  /// when unset.
  std::optional<double> region_diameter;
};

struct FitResult {
  ModelSpec estimates;
  double log_likelihood = -std::numeric_limits<double>::infinity();
  bool converged = false;
  int iterations = 0;
  std::vector<std::string> warnings;
};

namespace detail {

/// Log-likelihood with beta and sigma2 profiled out, as a function of
/// (log phi, log nugget-to-sill ratio). The distance matrix is cached.
class ProfileLikelihood {
 public:
  ProfileLikelihood(const SurveyData& data, double kappa, NuggetMode mode)
      : kappa_(kappa),
        y_(data.response_vector()),
        design_(data.design_matrix()),
        weights_(data.nuggets(1.0, mode)) {
    const auto n = static_cast<Eigen::Index>(data.size());
    dist_.resize(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      dist_(i, i) = 0.0;
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double d = distance(data.locations()[static_cast<std::size_t>(i)],
                                  data.locations()[static_cast<std::size_t>(j)]);
        dist_(i, j) = d;
        dist_(j, i) = d;
      }
    }
  }

  struct Evaluation {
    double log_likelihood = -std::numeric_limits<double>::infinity();
    Eigen::VectorXd beta;
    double sigma2 = 0.0;
  };

  /// ratio = tau2 / sigma2. Returns -inf log-likelihood when the correlation
  /// matrix cannot be factorized.
  [[nodiscard]] Evaluation evaluate(double phi, double ratio) const {
    Evaluation out;
    const MaternKernel kernel({1.0, phi, kappa_});
    const Eigen::Index n = dist_.rows();
    Eigen::MatrixXd c(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
      c(i, i) = 1.0 + ratio * weights_[static_cast<std::size_t>(i)];
      for (Eigen::Index j = i + 1; j < n; ++j) {
        const double r = kernel.correlation(dist_(i, j));
        c(i, j) = r;
        c(j, i) = r;
      }
    }
    const Eigen::LLT<Eigen::MatrixXd> llt(c);
    if (llt.info() != Eigen::Success) return out;
    const Eigen::MatrixXd wd = llt.matrixL().solve(design_);
    const Eigen::VectorXd wy = llt.matrixL().solve(y_);
    out.beta = (wd.transpose() * wd).ldlt().solve(wd.transpose() * wy);
    const double q = (wy - wd * out.beta).squaredNorm();
    const double nd = static_cast<double>(n);
    out.sigma2 = q / nd;
    if (!(out.sigma2 > 0.0) || !std::isfinite(out.sigma2)) return out;
    const double log_det = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
    out.log_likelihood =
        -0.5 * (nd * std::log(2.0 * std::numbers::pi) + nd * std::log(out.sigma2) + log_det + nd);
    return out;
  }

 private:
  double kappa_;
  Eigen::VectorXd y_;
  Eigen::MatrixXd design_;
  std::vector<double> weights_;
  Eigen::MatrixXd dist_;
};

}  // namespace detail

/// Maximum-likelihood fit of (beta, sigma2, phi, tau2) with kappa held
/// fixed. beta and sigma2 are profiled in closed form; the simplex searches
/// over log phi and log(tau2/sigma2), so every iterate is a valid model. A
/// second search on the tau2 = 0 boundary is run when the nugget is
/// estimated, and the best of all restarts is returned.
inline FitResult fit_ml(const SurveyData& data, double kappa, const FitOptions& options = {}) {
  if (!(kappa > 0.0) || !std::isfinite(kappa)) throw InvalidArgument("kappa must be positive");
  if (data.size() < options.min_observations) {
    throw InvalidArgument("fit_ml needs at least " + std::to_string(options.min_observations) +
                          " observations, got " + std::to_string(data.size()));
  }
  const auto& y = data.responses();
  if (std::all_of(y.begin(), y.end(), [&](double v) { return v == y.front(); })) {
    throw InvalidArgument("degenerate data: all responses are equal");
  }

  FitResult result;
  if (data.has_small_counts()) {
    result.warnings.emplace_back(
        "some locations have fewer than 100 individuals tested; the empirical-logit Gaussian "
        "approximation may be poor");
  }

  const double diameter = options.region_diameter.value_or(bounding_diameter(data.locations()));
  if (!(diameter > 0.0)) throw InvalidArgument("data locations span no area");
  const double log_phi_lo = std::log(1e-4 * diameter);
  const double log_phi_hi = std::log(1e2 * diameter);
  constexpr double kLogRatioLo = -30.0;
  constexpr double kLogRatioHi = 10.0;

  const detail::ProfileLikelihood profile(data, kappa, options.nugget_mode);
  const SimplexOptions simplex{0.5, options.relative_tolerance, options.size_tolerance, options.max_evaluations};

  double best_ll = -std::numeric_limits<double>::infinity();
  double best_phi = 0.0;
  double best_ratio = 0.0;
  bool best_converged = false;

  auto consider = [&](double phi, double ratio, bool converged) {
    const auto e = profile.evaluate(phi, ratio);
    if (e.log_likelihood > best_ll) {
      best_ll = e.log_likelihood;
      best_phi = phi;
      best_ratio = ratio;
      best_converged = converged;
    }
  };

  std::vector<std::pair<double, double>> starts;  // (phi, ratio)
  if (options.default_starts) {
    for (double scale : {0.1, 0.025, 0.4}) {
      starts.emplace_back(scale * diameter, options.estimate_nugget ? 0.1 : 0.0);
    }
  }
  for (const auto& s : options.starts) {
    validate(s);
    starts.emplace_back(s.matern.phi, options.estimate_nugget ? s.tau2 / s.matern.sigma2 : 0.0);
  }
  if (starts.empty()) throw InvalidArgument("fit_ml has no starting points");

  auto boundary_search = [&](double log_phi0) {
    auto objective = [&](const Eigen::VectorXd& x) {
      if (x[0] < log_phi_lo || x[0] > log_phi_hi) return std::numeric_limits<double>::infinity();
      return -profile.evaluate(std::exp(x[0]), 0.0).log_likelihood;
    };
    Eigen::VectorXd x0(1);
    x0[0] = log_phi0;
    if (!std::isfinite(objective(x0))) return;
    const auto r = nelder_mead(objective, x0, simplex);
    result.iterations += r.evaluations;
    consider(std::exp(r.argmin[0]), 0.0, r.converged);
  };

  for (auto [phi0, ratio0] : starts) {
    const double lp0 = std::clamp(std::log(phi0), log_phi_lo, log_phi_hi);
    if (!options.estimate_nugget || ratio0 == 0.0) {
      boundary_search(lp0);
      continue;
    }
    const double lr0 = std::clamp(std::log(ratio0), kLogRatioLo, kLogRatioHi);
    auto objective = [&](const Eigen::VectorXd& x) {
      if (x[0] < log_phi_lo || x[0] > log_phi_hi || x[1] < kLogRatioLo || x[1] > kLogRatioHi) {
        return std::numeric_limits<double>::infinity();
      }
      return -profile.evaluate(std::exp(x[0]), std::exp(x[1])).log_likelihood;
    };
    const auto r = nelder_mead(objective, Eigen::Vector2d(lp0, lr0), simplex);
    result.iterations += r.evaluations;
    consider(std::exp(r.argmin[0]), std::exp(r.argmin[1]), r.converged);
  }
  if (options.estimate_nugget && std::isfinite(best_ll)) boundary_search(std::log(best_phi));

  if (!std::isfinite(best_ll)) {
    throw SingularCovariance("fit_ml: no starting point gave a factorizable covariance", 0, 0);
  }
  const auto e = profile.evaluate(best_phi, best_ratio);
  result.estimates.beta.assign(e.beta.data(), e.beta.data() + e.beta.size());
  result.estimates.matern = {e.sigma2, best_phi, kappa};
  result.estimates.tau2 = best_ratio * e.sigma2;
  result.log_likelihood = e.log_likelihood;
  result.converged = best_converged;
  if (!best_converged) {
    result.warnings.emplace_back("simplex search hit the evaluation limit before converging");
  }
  return result;
}

}  // namespace geodesign
