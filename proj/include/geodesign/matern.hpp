#pragma once

#include <algorithm>
#include <cmath>
#include <limits>

#include "geodesign/error.hpp"

namespace geodesign {

/// Matérn covariance parameters: marginal variance, scale (distance units)
/// and smoothness. All strictly positive.
struct MaternParams {
  double sigma2 = 1.0;
  double phi = 1.0;
  double kappa = 0.5;

  friend bool operator==(const MaternParams&, const MaternParams&) = default;
};

inline void validate(const MaternParams& p) {
  if (!(p.sigma2 > 0.0) || !std::isfinite(p.sigma2)) {
    throw InvalidArgument("Matern variance sigma2 must be positive and finite");
  }
  if (!(p.phi > 0.0) || !std::isfinite(p.phi)) {
    throw InvalidArgument("Matern scale phi must be positive and finite");
  }
  if (!(p.kappa > 0.0) || !std::isfinite(p.kappa)) {
    throw InvalidArgument("Matern smoothness kappa must be positive and finite");
  }
}

namespace detail {

// Half-integer orders up to this bound use the finite-sum closed form.
inline constexpr int kMaxClosedFormOrder = 12;

// Returns m when kappa == m + 1/2 exactly, otherwise -1.
inline int half_integer_order(double kappa) {
  const double m = kappa - 0.5;
  if (m < 0.0 || m > kMaxClosedFormOrder || m != std::floor(m)) return -1;
  return static_cast<int>(m);
}

// rho(t) for kappa = m + 1/2:
//   e^{-t} m!/(2m)! sum_{k=0}^{m} (m+k)! / (k! (m-k)!) (2t)^{m-k}
inline double matern_half_integer(double t, int m) {
  double sum = 0.0;
  for (int k = 0; k <= m; ++k) {
    const double log_coef = std::lgamma(m + k + 1.0) - std::lgamma(k + 1.0) -
                            std::lgamma(m - k + 1.0) + std::lgamma(m + 1.0) -
                            std::lgamma(2.0 * m + 1.0);
    sum += std::exp(log_coef) * std::pow(2.0 * t, m - k);
  }
  return std::exp(-t) * sum;
}

// rho(t) = {2^{kappa-1} Gamma(kappa)}^{-1} t^kappa K_kappa(t), evaluated in logs.
inline double matern_bessel(double t, double kappa) {
  if (t < 1e-12) return 1.0;
  if (t > 700.0) return 0.0;
  const double k = std::cyl_bessel_k(kappa, t);
  if (!(k > 0.0)) return 0.0;
  const double log_rho = (1.0 - kappa) * std::log(2.0) - std::lgamma(kappa) +
                         kappa * std::log(t) + std::log(k);
  return std::min(1.0, std::exp(log_rho));
}

}  // namespace detail

/// Matérn evaluator whose parameters are validated once at construction,
/// for use in inner loops.
class MaternKernel {
 public:
  explicit MaternKernel(const MaternParams& params)
      : params_(params), inv_phi_(1.0 / params.phi), order_(detail::half_integer_order(params.kappa)) {
    validate(params);
  }

  [[nodiscard]] double correlation(double u) const {
    if (u == 0.0) return 1.0;
    const double t = u * inv_phi_;
    switch (order_) {
      case 0:
        return std::exp(-t);
      case 1:
        return (1.0 + t) * std::exp(-t);
      case 2:
        return (1.0 + t + t * t / 3.0) * std::exp(-t);
      case -1:
        return detail::matern_bessel(t, params_.kappa);
      default:
        return detail::matern_half_integer(t, order_);
    }
  }

  [[nodiscard]] double covariance(double u) const { return params_.sigma2 * correlation(u); }
  [[nodiscard]] const MaternParams& params() const { return params_; }

 private:
  MaternParams params_;
  double inv_phi_;
  int order_;
};

/// Matérn correlation at distance u. Equals 1 at u = 0 and decays to 0.
/// Half-integer smoothness (0.5, 1.5, 2.5, ...) is evaluated in closed form;
/// other orders go through the modified Bessel function of the second kind.
inline double matern_correlation(double u, const MaternParams& params) {
  if (!std::isfinite(u) || u < 0.0) {
    throw InvalidArgument("distance must be finite and non-negative");
  }
  return MaternKernel(params).correlation(u);
}

}  // namespace geodesign
