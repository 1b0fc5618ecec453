#pragma once

#include <json.hpp>

#include "geodesign/designs.hpp"
#include "geodesign/inference.hpp"
#include "geodesign/model.hpp"

namespace geodesign {

inline void to_json(nlohmann::ordered_json& j, const Location& p) { j = nlohmann::ordered_json{{"x", p.x}, {"y", p.y}}; }
inline void from_json(const nlohmann::ordered_json& j, Location& p) {
  p.x = j.at("x").get<double>();
  p.y = j.at("y").get<double>();
}

inline void to_json(nlohmann::ordered_json& j, const MaternParams& m) {
  j = nlohmann::ordered_json{{"sigma2", m.sigma2}, {"phi", m.phi}, {"kappa", m.kappa}};
}
inline void from_json(const nlohmann::ordered_json& j, MaternParams& m) {
  m.sigma2 = j.value("sigma2", m.sigma2);
  m.phi = j.value("phi", m.phi);
  m.kappa = j.value("kappa", m.kappa);
}

inline void to_json(nlohmann::ordered_json& j, const ModelSpec& m) {
  j = nlohmann::ordered_json{{"beta", m.beta}, {"matern", m.matern}, {"tau2", m.tau2}};
}
/// Missing fields keep their current values.
inline void from_json(const nlohmann::ordered_json& j, ModelSpec& m) {
  if (j.contains("beta")) m.beta = j.at("beta").get<std::vector<double>>();
  if (j.contains("matern")) from_json(j.at("matern"), m.matern);
  m.tau2 = j.value("tau2", m.tau2);
}

inline void to_json(nlohmann::ordered_json& j, const FitResult& f) {
  j = nlohmann::ordered_json{{"estimates", f.estimates},
                             {"log_likelihood", f.log_likelihood},
                             {"converged", f.converged},
                             {"iterations", f.iterations},
                             {"warnings", f.warnings}};
}
inline void from_json(const nlohmann::ordered_json& j, FitResult& f) {
  from_json(j.at("estimates"), f.estimates);
  f.log_likelihood = j.at("log_likelihood").get<double>();
  f.converged = j.at("converged").get<bool>();
  f.iterations = j.at("iterations").get<int>();
  f.warnings = j.at("warnings").get<std::vector<std::string>>();
}

}  // namespace geodesign
