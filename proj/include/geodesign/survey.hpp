#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "geodesign/error.hpp"
#include "geodesign/geometry.hpp"
#include "geodesign/model.hpp"

namespace geodesign {

/// Binomial count at one location: y positives out of n tested.
struct Count {
  long positives = 0;
  long tested = 0;

  friend bool operator==(const Count&, const Count&) = default;
};

/// log{(y + 0.5) / (n - y + 0.5)}; finite for every 0 <= y <= n.
inline double empirical_logit(long y, long n) {
  if (n < 1) throw InvalidArgument("empirical_logit requires n >= 1");
  if (y < 0 || y > n) throw InvalidArgument("empirical_logit requires 0 <= y <= n");
  return std::log((static_cast<double>(y) + 0.5) / (static_cast<double>(n - y) + 0.5));
}

/// How the nugget enters the covariance of observed responses.
enum class NuggetMode {
  kConstant,           ///< tau2 at every location
  kPrecisionWeighted,  ///< tau2 * mean(n) / n_i, for count data
};

/// Observations on the Gaussian (logit) scale with optional counts and
/// covariates. Build through the named constructors, which validate.
class SurveyData {
 public:
  SurveyData() = default;

  static SurveyData continuous(std::vector<Location> locations, std::vector<double> responses,
                               std::vector<std::vector<double>> covariates = {}) {
    SurveyData d;
    d.locations_ = std::move(locations);
    d.responses_ = std::move(responses);
    d.covariates_ = std::move(covariates);
    d.check();
    return d;
  }

  /// Counts are transformed to empirical logits.
  static SurveyData from_counts(std::vector<Location> locations, std::vector<Count> counts,
                                std::vector<std::vector<double>> covariates = {}) {
    SurveyData d;
    d.locations_ = std::move(locations);
    d.counts_ = std::move(counts);
    d.covariates_ = std::move(covariates);
    if (d.counts_->size() != d.locations_.size()) {
      throw InvalidArgument("counts and locations differ in length");
    }
    d.responses_.reserve(d.counts_->size());
    for (const auto& c : *d.counts_) d.responses_.push_back(empirical_logit(c.positives, c.tested));
    d.check();
    return d;
  }

  [[nodiscard]] std::size_t size() const { return locations_.size(); }
  [[nodiscard]] bool empty() const { return locations_.empty(); }
  [[nodiscard]] const std::vector<Location>& locations() const { return locations_; }
  [[nodiscard]] const std::vector<double>& responses() const { return responses_; }
  [[nodiscard]] const std::optional<std::vector<Count>>& counts() const { return counts_; }
  [[nodiscard]] const std::vector<std::vector<double>>& covariates() const { return covariates_; }
  [[nodiscard]] std::size_t covariate_dim() const {
    return covariates_.empty() ? 0 : covariates_.front().size();
  }

  /// Same locations and covariates, different responses.
  [[nodiscard]] SurveyData with_responses(std::vector<double> responses) const {
    return continuous(locations_, std::move(responses), covariates_);
  }

  [[nodiscard]] Eigen::VectorXd response_vector() const {
    return Eigen::Map<const Eigen::VectorXd>(responses_.data(), static_cast<Eigen::Index>(responses_.size()));
  }

  /// n x (1 + p) trend design matrix; first column is the intercept.
  [[nodiscard]] Eigen::MatrixXd design_matrix() const {
    const auto n = static_cast<Eigen::Index>(size());
    const auto p = static_cast<Eigen::Index>(covariate_dim());
    Eigen::MatrixXd d(n, p + 1);
    for (Eigen::Index i = 0; i < n; ++i) {
      d(i, 0) = 1.0;
      for (Eigen::Index k = 0; k < p; ++k) {
        d(i, k + 1) = covariates_[static_cast<std::size_t>(i)][static_cast<std::size_t>(k)];
      }
    }
    return d;
  }

  /// Per-location nugget variances under the given mode. Precision weighting
  /// needs counts; without them it falls back to a constant nugget.
  [[nodiscard]] std::vector<double> nuggets(double tau2, NuggetMode mode) const {
    std::vector<double> out(size(), tau2);
    if (mode != NuggetMode::kPrecisionWeighted || !counts_ || counts_->empty()) return out;
    double mean_n = 0.0;
    for (const auto& c : *counts_) mean_n += static_cast<double>(c.tested);
    mean_n /= static_cast<double>(counts_->size());
    for (std::size_t i = 0; i < out.size(); ++i) {
      out[i] = tau2 * mean_n / static_cast<double>((*counts_)[i].tested);
    }
    return out;
  }

  /// True when any tested count is below the size at which the logit
  /// approximation is considered reliable.
  [[nodiscard]] bool has_small_counts(long threshold = 100) const {
    if (!counts_) return false;
    for (const auto& c : *counts_) {
      if (c.tested < threshold) return true;
    }
    return false;
  }

 private:
  void check() const {
    if (responses_.size() != locations_.size()) {
      throw InvalidArgument("responses and locations differ in length");
    }
    for (const auto& p : locations_) validate(p);
    for (double r : responses_) {
      if (!std::isfinite(r)) throw InvalidArgument("responses must be finite");
    }
    if (!covariates_.empty()) {
      if (covariates_.size() != locations_.size()) {
        throw InvalidArgument("covariates and locations differ in length");
      }
      const std::size_t p = covariates_.front().size();
      for (const auto& row : covariates_) {
        if (row.size() != p) throw InvalidArgument("covariate dimension is not constant");
        for (double v : row) {
          if (!std::isfinite(v)) throw InvalidArgument("covariates must be finite");
        }
      }
    }
  }

  std::vector<Location> locations_;
  std::vector<double> responses_;
  std::optional<std::vector<Count>> counts_;
  std::vector<std::vector<double>> covariates_;
};

/// d(x)'beta for one covariate row.
inline double trend(const ModelSpec& model, std::span<const double> covariates) {
  if (covariates.size() != model.covariate_dim()) {
    throw InvalidArgument("covariate dimension does not match trend coefficients");
  }
  double t = model.beta[0];
  for (std::size_t k = 0; k < covariates.size(); ++k) t += model.beta[k + 1] * covariates[k];
  return t;
}

}  // namespace geodesign
