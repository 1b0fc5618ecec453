#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "geodesign/likelihood.hpp"
#include "geodesign/model.hpp"
#include "geodesign/survey.hpp"

namespace geodesign {

struct PredictionResult {
  std::vector<Location> targets;
  std::vector<double> mean;      // E[d(x)'beta + S(x) | Y]
  std::vector<double> variance;  // Var[S(x) | Y]
  std::optional<std::vector<double>> exceedance;
};

struct KrigingOptions {
  NuggetMode nugget_mode = NuggetMode::kConstant;
  /// Replace model.beta by its generalized-least-squares estimate given the
  /// data; the prediction variance is unaffected.
  bool profile_beta = false;
};

namespace detail {

// Index of a data location equal to `target` whose nugget is zero, if any.
inline std::optional<std::size_t> exact_hit(const Location& target, std::span<const Location> design,
                                            std::span<const double> nuggets) {
  for (std::size_t i = 0; i < design.size(); ++i) {
    if (nuggets[i] == 0.0 && design[i] == target) return i;
  }
  return std::nullopt;
}

inline Eigen::MatrixXd cross_covariance(std::span<const Location> design, std::span<const Location> targets,
                                        const MaternKernel& kernel) {
  Eigen::MatrixXd c(static_cast<Eigen::Index>(design.size()), static_cast<Eigen::Index>(targets.size()));
  for (std::size_t j = 0; j < targets.size(); ++j) {
    for (std::size_t i = 0; i < design.size(); ++i) {
      c(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
          kernel.covariance(distance(design[i], targets[j]));
    }
  }
  return c;
}

inline double upper_tail(double threshold, double mean, double variance) {
  if (threshold == -std::numeric_limits<double>::infinity()) return 1.0;
  if (threshold == std::numeric_limits<double>::infinity()) return 0.0;
  if (variance <= 0.0) {
    if (mean > threshold) return 1.0;
    if (mean < threshold) return 0.0;
    return 0.5;
  }
  const double z = (threshold - mean) / std::sqrt(variance);
  return 0.5 * std::erfc(z / std::numbers::sqrt2);
}

}  // namespace detail

/// Prediction variance sigma2 (1 - r'V^{-1} r) at each target for a design
/// with the given per-location nuggets. Depends only on locations and
/// parameters. Targets coinciding with a zero-nugget design point get
/// exactly zero.
inline std::vector<double> prediction_variance(const MaternParams& matern, std::span<const Location> design,
                                               std::span<const double> nuggets,
                                               std::span<const Location> targets) {
  validate(matern);
  std::vector<double> pv(targets.size(), matern.sigma2);
  if (design.empty()) return pv;
  const CovarianceFactor factor(design, matern, nuggets);
  const MaternKernel kernel(matern);
  const Eigen::MatrixXd w = factor.whiten(detail::cross_covariance(design, targets, kernel));
  for (std::size_t j = 0; j < targets.size(); ++j) {
    if (detail::exact_hit(targets[j], design, nuggets)) {
      pv[j] = 0.0;
      continue;
    }
    pv[j] = std::max(0.0, matern.sigma2 - w.col(static_cast<Eigen::Index>(j)).squaredNorm());
  }
  return pv;
}

/// Prediction-variance surface for a design. When per-location tested
/// counts are supplied the nugget is precision weighted,
/// tau2_i = tau2 * mean(n) / n_i; otherwise it is constant.
inline std::vector<double> prediction_variance_surface(const ModelSpec& model, std::span<const Location> design,
                                                       std::span<const Location> targets,
                                                       std::optional<std::span<const long>> tested = {}) {
  validate(model);
  std::vector<double> nuggets(design.size(), model.tau2);
  if (tested) {
    if (tested->size() != design.size()) throw InvalidArgument("tested counts and design differ in length");
    double mean_n = 0.0;
    for (long n : *tested) {
      if (n < 1) throw InvalidArgument("tested counts must be at least 1");
      mean_n += static_cast<double>(n);
    }
    if (!tested->empty()) mean_n /= static_cast<double>(tested->size());
    for (std::size_t i = 0; i < design.size(); ++i) {
      nuggets[i] = model.tau2 * mean_n / static_cast<double>((*tested)[i]);
    }
  }
  return prediction_variance(model.matern, design, nuggets, targets);
}

/// Kriging predictor of d(x)'beta + S(x) and the conditional variance of
/// S(x). target_covariates is required when the model has trend terms.
inline PredictionResult krige(const ModelSpec& model, const SurveyData& data, std::span<const Location> targets,
                              std::span<const std::vector<double>> target_covariates = {},
                              const KrigingOptions& options = {}) {
  validate(model);
  if (data.covariate_dim() != model.covariate_dim()) {
    throw InvalidArgument("data covariate dimension does not match trend coefficients");
  }
  if (model.covariate_dim() > 0 && target_covariates.size() != targets.size()) {
    throw InvalidArgument("covariates are required at every target when the model has trend terms");
  }
  const auto target_trend = [&](std::size_t j, const Eigen::VectorXd& beta) {
    double t = beta[0];
    for (std::size_t k = 0; k < model.covariate_dim(); ++k) {
      t += beta[static_cast<Eigen::Index>(k + 1)] * target_covariates[j][k];
    }
    return t;
  };

  PredictionResult out;
  out.targets.assign(targets.begin(), targets.end());
  Eigen::VectorXd beta =
      Eigen::Map<const Eigen::VectorXd>(model.beta.data(), static_cast<Eigen::Index>(model.beta.size()));
  if (data.empty()) {
    for (std::size_t j = 0; j < targets.size(); ++j) out.mean.push_back(target_trend(j, beta));
    out.variance.assign(targets.size(), model.sigma2());
    return out;
  }

  const auto nuggets = data.nuggets(model.tau2, options.nugget_mode);
  const CovarianceFactor factor(data.locations(), model.matern, nuggets);
  const Eigen::MatrixXd design_matrix = data.design_matrix();
  const Eigen::VectorXd y = data.response_vector();
  if (options.profile_beta) beta = gls_coefficients(factor, design_matrix, y);

  const Eigen::VectorXd alpha = factor.solve(y - design_matrix * beta);
  const MaternKernel kernel(model.matern);
  const Eigen::MatrixXd c = detail::cross_covariance(data.locations(), targets, kernel);
  const Eigen::MatrixXd w = factor.whiten(c);
  out.mean.resize(targets.size());
  out.variance.resize(targets.size());
  for (std::size_t j = 0; j < targets.size(); ++j) {
    const auto col = static_cast<Eigen::Index>(j);
    if (const auto hit = detail::exact_hit(targets[j], data.locations(), nuggets)) {
      out.mean[j] = data.responses()[*hit];
      out.variance[j] = 0.0;
      continue;
    }
    out.mean[j] = target_trend(j, beta) + c.col(col).dot(alpha);
    out.variance[j] = std::max(0.0, model.sigma2() - w.col(col).squaredNorm());
  }
  return out;
}

/// Plug-in Gaussian probability that S-plus-trend exceeds c at each target.
/// A zero variance gives 0 or 1, and 0.5 when the mean equals c exactly.
inline std::vector<double> exceedance_probability(const PredictionResult& prediction, double threshold) {
  if (std::isnan(threshold)) throw InvalidArgument("exceedance threshold is NaN");
  std::vector<double> p(prediction.mean.size());
  for (std::size_t j = 0; j < p.size(); ++j) {
    p[j] = detail::upper_tail(threshold, prediction.mean[j], prediction.variance[j]);
  }
  return p;
}

inline std::vector<double> exceedance_probability(const ModelSpec& model, const SurveyData& data,
                                                  std::span<const Location> targets, double threshold,
                                                  std::span<const std::vector<double>> target_covariates = {},
                                                  const KrigingOptions& options = {}) {
  return exceedance_probability(krige(model, data, targets, target_covariates, options), threshold);
}

/// Mean of the prediction variance over a finite evaluation set: the
/// discretized average prediction variance. If `data` is given it supplies
/// per-location counts for precision weighting and must sit on `design`.
inline double apv(const ModelSpec& model, std::span<const Location> design,
                  std::span<const Location> evaluation_points, const SurveyData* data = nullptr,
                  NuggetMode mode = NuggetMode::kConstant) {
  if (evaluation_points.empty()) throw InvalidArgument("APV needs a nonempty evaluation set");
  validate(model);
  std::vector<double> nuggets(design.size(), model.tau2);
  if (data != nullptr) {
    if (data->size() != design.size() ||
        !std::equal(design.begin(), design.end(), data->locations().begin())) {
      throw InvalidArgument("APV data locations must match the design");
    }
    nuggets = data->nuggets(model.tau2, mode);
  }
  const auto pv = prediction_variance(model.matern, design, nuggets, evaluation_points);
  return std::accumulate(pv.begin(), pv.end(), 0.0) / static_cast<double>(pv.size());
}

/// APV over a region: its candidate set, or a grid_k x grid_k cell-centre
/// grid when the region is a rectangle.
inline double apv(const ModelSpec& model, std::span<const Location> design, const Region& region,
                  const SurveyData* data = nullptr, int grid_k = 64) {
  if (region.is_rectangle()) {
    const auto grid = regular_grid(region.rectangle(), grid_k);
    return apv(model, design, grid, data);
  }
  return apv(model, design, region.candidates(), data);
}

/// Prediction variance over a fixed target set, updated in O(n m) as design
/// points are appended (one new row of the Cholesky factor per point).
/// Matches prediction_variance on the same design up to rounding.
class PvTracker {
 public:
  PvTracker(const MaternParams& matern, std::vector<Location> targets)
      : kernel_(matern), targets_(std::move(targets)), pv_(targets_.size(), matern.sigma2) {}

  /// Appends a design point with its nugget variance.
  void add(const Location& point, double nugget) {
    if (!(nugget >= 0.0) || !std::isfinite(nugget)) throw InvalidArgument("nugget must be non-negative");
    const std::size_t n = design_.size();
    const std::size_t m = targets_.size();
    const double sigma2 = kernel_.params().sigma2;

    std::vector<double> row(n);
    for (std::size_t i = 0; i < n; ++i) {
      double c = kernel_.covariance(distance(design_[i], point));
      const double* li = &lower_[i * (i + 1) / 2];
      for (std::size_t k = 0; k < i; ++k) c -= li[k] * row[k];
      row[i] = c / li[i];
    }
    double diag = sigma2 + nugget;
    for (double v : row) diag -= v * v;
    const double coincident = kCoincidenceTolerance * kernel_.params().phi;
    for (std::size_t i = 0; i < n; ++i) {
      if (nugget == 0.0 && nuggets_[i] == 0.0 && distance(design_[i], point) <= coincident) {
        throw SingularCovariance("design point coincides with existing design point " + std::to_string(i), i, n);
      }
    }
    if (!(diag > 0.0)) {
      throw SingularCovariance("adding design point makes the covariance singular", n, n);
    }
    const double lnn = std::sqrt(diag);
    lower_.insert(lower_.end(), row.begin(), row.end());
    lower_.push_back(lnn);

    std::vector<double> w(m);
    for (std::size_t t = 0; t < m; ++t) w[t] = kernel_.covariance(distance(point, targets_[t]));
    for (std::size_t k = 0; k < n; ++k) {
      const double lk = row[k];
      if (lk == 0.0) continue;
      const double* wk = &whitened_[k * m];
      for (std::size_t t = 0; t < m; ++t) w[t] -= lk * wk[t];
    }
    for (std::size_t t = 0; t < m; ++t) {
      w[t] /= lnn;
      pv_[t] = std::max(0.0, pv_[t] - w[t] * w[t]);
    }
    whitened_.insert(whitened_.end(), w.begin(), w.end());
    if (nugget == 0.0) {
      for (std::size_t t = 0; t < m; ++t) {
        if (targets_[t] == point) pv_[t] = 0.0;
      }
    }
    design_.push_back(point);
    nuggets_.push_back(nugget);
  }

  [[nodiscard]] const std::vector<double>& pv() const { return pv_; }
  [[nodiscard]] const std::vector<Location>& targets() const { return targets_; }
  [[nodiscard]] const std::vector<Location>& design() const { return design_; }
  [[nodiscard]] const MaternParams& params() const { return kernel_.params(); }

  [[nodiscard]] double average() const {
    return std::accumulate(pv_.begin(), pv_.end(), 0.0) / static_cast<double>(pv_.size());
  }

 private:
  MaternKernel kernel_;
  std::vector<Location> targets_;
  std::vector<double> pv_;
  std::vector<Location> design_;
  std::vector<double> nuggets_;
  std::vector<double> lower_;     // packed rows of the lower Cholesky factor
  std::vector<double> whitened_;  // row k = k-th row of L^{-1} C, length m
};

}  // namespace geodesign
