#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numbers>
#include <vector>

#include "geodesign/model.hpp"
#include "geodesign/survey.hpp"

namespace geodesign {

/// Exact multivariate-normal log density of the responses: mean D beta,
/// covariance sigma2 R + diag(nuggets).
inline double gaussian_log_likelihood(const SurveyData& data, const ModelSpec& model,
                                      NuggetMode mode = NuggetMode::kConstant) {
  validate(model);
  if (data.empty()) throw InvalidArgument("log-likelihood needs at least one observation");
  if (data.covariate_dim() != model.covariate_dim()) {
    throw InvalidArgument("covariate dimension does not match trend coefficients");
  }
  const CovarianceFactor factor(data.locations(), model.matern, data.nuggets(model.tau2, mode));
  const Eigen::VectorXd beta =
      Eigen::Map<const Eigen::VectorXd>(model.beta.data(), static_cast<Eigen::Index>(model.beta.size()));
  const Eigen::VectorXd resid = data.response_vector() - data.design_matrix() * beta;
  const Eigen::VectorXd white = factor.whiten(resid);
  const auto n = static_cast<double>(data.size());
  return -0.5 * (n * std::log(2.0 * std::numbers::pi) + factor.log_determinant() + white.squaredNorm());
}

/// Generalized least squares (D'V^{-1}D)^{-1} D'V^{-1} y for a factorized V.
inline Eigen::VectorXd gls_coefficients(const CovarianceFactor& factor, const Eigen::MatrixXd& design,
                                        const Eigen::VectorXd& y) {
  const Eigen::MatrixXd wd = factor.whiten(design);
  const Eigen::VectorXd wy = factor.whiten(y);
  return (wd.transpose() * wd).ldlt().solve(wd.transpose() * wy);
}

}  // namespace geodesign
