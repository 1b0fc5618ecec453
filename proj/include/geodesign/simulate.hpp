#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <span>
#include <vector>

#include "geodesign/model.hpp"
#include "geodesign/random.hpp"

namespace geodesign {

/// One draw of the zero-mean latent field at a fixed set of locations.
struct FieldRealization {
  std::vector<Location> locations;
  std::vector<double> values;
};

/// Draws the zero-mean latent field S (covariance sigma2 R, no nugget) on a
/// fixed point set. The Cholesky factor is computed once and reused.
class FieldSimulator {
 public:
  FieldSimulator(std::vector<Location> locations, const ModelSpec& model)
      : locations_(std::move(locations)),
        factor_(locations_, model.matern, std::vector<double>(locations_.size(), 0.0)) {
    validate(model);
  }

  [[nodiscard]] FieldRealization draw(std::uint64_t seed) const {
    Rng rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    Eigen::VectorXd z(static_cast<Eigen::Index>(locations_.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = normal(rng);
    const Eigen::VectorXd s = factor_.color(z);
    return {locations_, std::vector<double>(s.data(), s.data() + s.size())};
  }

  [[nodiscard]] const std::vector<Location>& locations() const { return locations_; }
  [[nodiscard]] bool jitter_applied() const { return factor_.jitter_applied(); }

 private:
  std::vector<Location> locations_;
  CovarianceFactor factor_;
};

/// Zero-mean field draw; the trend and nugget are left to callers.
inline FieldRealization simulate_field(std::span<const Location> locations, const ModelSpec& model,
                                       std::uint64_t seed) {
  return FieldSimulator(std::vector<Location>(locations.begin(), locations.end()), model).draw(seed);
}

}  // namespace geodesign
