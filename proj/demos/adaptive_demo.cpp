// Simulate a field on the unit square, start from an inhibitory design and
// add adaptive batches, printing APV after each step.

#include <iostream>
#include <cmath>
#include <memory>
#include <span>

#include "geodesign/designs.hpp"
#include "geodesign/geometry.hpp"
#include "geodesign/prediction.hpp"
#include "geodesign/simulate.hpp"

int main() {
  using namespace geodesign;
  const ModelSpec model{{0.0}, {1.0, 0.05, 1.5}, 0.0};
  const auto grid = std::make_shared<const std::vector<Location>>(regular_grid(Rectangle::unit_square(), 32));

  const auto field = simulate_field(*grid, model, 7);
  const auto initial = inhibitory_design(Region(*grid), 30, 0.03, 11);
  std::cout << "initial design: " << initial.size() << " points, APV "
            << apv(model, initial.points, std::span<const Location>(*grid)) << '\n';

  auto state = make_adaptive_state(grid, initial, model);
  for (int batch = 1; batch <= 4; ++batch) {
    auto outcome = adaptive_next_batch(state, 10, 0.03);
    state = std::move(outcome.updated);
    std::cout << "batch " << batch << ": +" << outcome.batch.size() << " (" << outcome.rejected.size()
              << " rejected by delta), APV " << apv(model, state.design.points, std::span<const Location>(*grid)) << '\n';
  }

  // Kriging from the final design's simulated values.
  std::vector<double> y;
  for (auto idx : state.design.candidate_index) y.push_back(field.values[idx]);
  const auto data = SurveyData::continuous(state.design.points, y);
  const auto pred = krige(model, data, *grid);
  double sse = 0.0;
  for (std::size_t i = 0; i < grid->size(); ++i) {
    const double e = pred.mean[i] - field.values[i];
    sse += e * e;
  }
  std::cout << "kriging RMSE over grid: " << std::sqrt(sse / static_cast<double>(grid->size())) << '\n';
}
