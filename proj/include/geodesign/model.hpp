#pragma once

#include <Eigen/Cholesky>
#include <Eigen/Dense>
#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <string>
#include <vector>

#include "geodesign/error.hpp"
#include "geodesign/geometry.hpp"
#include "geodesign/matern.hpp"

namespace geodesign {

/// Gaussian geostatistical model: Y = d(x)'beta + S(x) + Z with S a
/// stationary Matérn process and Z independent noise of variance tau2.
/// beta[0] is the intercept.
struct ModelSpec {
  std::vector<double> beta{0.0};
  MaternParams matern;
  double tau2 = 0.0;

  [[nodiscard]] std::size_t covariate_dim() const { return beta.empty() ? 0 : beta.size() - 1; }
  [[nodiscard]] double sigma2() const { return matern.sigma2; }
};

inline void validate(const ModelSpec& m) {
  validate(m.matern);
  if (m.beta.empty()) throw InvalidArgument("model needs at least an intercept coefficient");
  for (double b : m.beta) {
    if (!std::isfinite(b)) throw InvalidArgument("trend coefficients must be finite");
  }
  if (!(m.tau2 >= 0.0) || !std::isfinite(m.tau2)) {
    throw InvalidArgument("nugget tau2 must be finite and non-negative");
  }
}

/// Locations closer than this multiple of phi are treated as coincident when
/// there is no nugget to separate them.
inline constexpr double kCoincidenceTolerance = 1e-9;

/// Jitter added to the diagonal, relative to sigma2, on the one retry after
/// a failed Cholesky factorization.
inline constexpr double kJitter = 1e-10;

namespace detail {

inline std::pair<std::size_t, std::size_t> closest_pair(std::span<const Location> pts) {
  std::pair<std::size_t, std::size_t> best{0, pts.size() > 1 ? 1 : 0};
  double best_d = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < pts.size(); ++i) {
    for (std::size_t j = i + 1; j < pts.size(); ++j) {
      const double d = distance(pts[i], pts[j]);
      if (d < best_d) {
        best_d = d;
        best = {i, j};
      }
    }
  }
  return best;
}

inline void require_nugget_size(std::span<const Location> locations, std::span<const double> nuggets) {
  if (nuggets.size() != locations.size()) {
    throw InvalidArgument("per-location nugget vector length does not match locations");
  }
  for (double t : nuggets) {
    if (!(t >= 0.0) || !std::isfinite(t)) throw InvalidArgument("nuggets must be finite and non-negative");
  }
}

}  // namespace detail

/// V = sigma2 R + diag(nuggets). Built symmetric by construction.
inline Eigen::MatrixXd covariance_matrix(std::span<const Location> locations, const MaternParams& matern,
                                         std::span<const double> nuggets) {
  detail::require_nugget_size(locations, nuggets);
  const MaternKernel kernel(matern);
  const auto n = static_cast<Eigen::Index>(locations.size());
  Eigen::MatrixXd v(n, n);
  for (Eigen::Index i = 0; i < n; ++i) {
    v(i, i) = matern.sigma2 + nuggets[static_cast<std::size_t>(i)];
    for (Eigen::Index j = i + 1; j < n; ++j) {
      const double c = kernel.covariance(
          distance(locations[static_cast<std::size_t>(i)], locations[static_cast<std::size_t>(j)]));
      v(i, j) = c;
      v(j, i) = c;
    }
  }
  return v;
}

inline Eigen::MatrixXd covariance_matrix(std::span<const Location> locations, const ModelSpec& model) {
  validate(model);
  const std::vector<double> nuggets(locations.size(), model.tau2);
  return covariance_matrix(locations, model.matern, nuggets);
}

/// Cholesky factor of a covariance matrix, with the record of whether
/// diagonal jitter had to be applied.
class CovarianceFactor {
 public:
  CovarianceFactor() = default;

  /// Factorizes sigma2 R + diag(nuggets). Coincident locations without a
  /// nugget are rejected up front; otherwise a failed factorization is
  /// retried once with jitter before SingularCovariance is thrown.
  CovarianceFactor(std::span<const Location> locations, const MaternParams& matern,
                   std::span<const double> nuggets) {
    detail::require_nugget_size(locations, nuggets);
    validate(matern);
    const double coincident = kCoincidenceTolerance * matern.phi;
    for (std::size_t i = 0; i < locations.size(); ++i) {
      for (std::size_t j = i + 1; j < locations.size(); ++j) {
        if (nuggets[i] == 0.0 && nuggets[j] == 0.0 &&
            distance(locations[i], locations[j]) <= coincident) {
          throw SingularCovariance("singular covariance: locations " + std::to_string(i) + " and " +
                                       std::to_string(j) + " coincide and have no nugget",
                                   i, j);
        }
      }
    }
    Eigen::MatrixXd v = covariance_matrix(locations, matern, nuggets);
    llt_.compute(v);
    if (llt_.info() != Eigen::Success) {
      v.diagonal().array() += kJitter * matern.sigma2;
      llt_.compute(v);
      jitter_applied_ = true;
      if (llt_.info() != Eigen::Success) {
        const auto [i, j] = detail::closest_pair(locations);
        throw SingularCovariance("covariance matrix is not positive definite; nearest locations are " +
                                     std::to_string(i) + " and " + std::to_string(j),
                                 i, j);
      }
    }
  }

  CovarianceFactor(std::span<const Location> locations, const ModelSpec& model)
      : CovarianceFactor(locations, model.matern, std::vector<double>(locations.size(), model.tau2)) {
    validate(model);
  }

  [[nodiscard]] Eigen::Index size() const { return llt_.matrixLLT().rows(); }
  [[nodiscard]] bool jitter_applied() const { return jitter_applied_; }

  /// Lower-triangular factor L with V = L L'.
  [[nodiscard]] Eigen::MatrixXd lower() const { return llt_.matrixL(); }

  [[nodiscard]] double log_determinant() const {
    return 2.0 * llt_.matrixLLT().diagonal().array().log().sum();
  }

  template <typename Derived>
  [[nodiscard]] Eigen::MatrixXd solve(const Eigen::MatrixBase<Derived>& b) const {
    return llt_.solve(b);
  }

  /// Returns L^{-1} b.
  template <typename Derived>
  [[nodiscard]] Eigen::MatrixXd whiten(const Eigen::MatrixBase<Derived>& b) const {
    return llt_.matrixL().solve(b);
  }

  /// Returns L z; maps iid standard normals to draws with covariance V.
  [[nodiscard]] Eigen::VectorXd color(const Eigen::VectorXd& z) const {
    return llt_.matrixL() * z;
  }

 private:
  Eigen::LLT<Eigen::MatrixXd> llt_;
  bool jitter_applied_ = false;
};

}  // namespace geodesign
