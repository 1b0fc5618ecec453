#pragma once

#include <algorithm>
#include <cstdint>
#include <functional>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "geodesign/inference.hpp"
#include "geodesign/prediction.hpp"
#include "geodesign/random.hpp"

namespace geodesign {

/// Which minimum-distance rule a design was generated under.
enum class SpacingRule {
  kNone,            ///< no constraint
  kAllPairs,        ///< every pair >= delta (inhibitory)
  kNewPointsStrict, ///< every added point > delta from all earlier points (adaptive)
};

/// Ordered sampling locations with batch lineage. batch_index 0 marks the
/// initial design. candidate_index maps each point into the candidate set
/// it was drawn from; it is empty for designs over a continuous rectangle.
struct Design {
  std::vector<Location> points;
  std::vector<int> batch_index;
  std::vector<std::size_t> candidate_index;
  double delta = 0.0;
  SpacingRule rule = SpacingRule::kNone;

  [[nodiscard]] std::size_t size() const { return points.size(); }
  [[nodiscard]] int last_batch() const {
    return batch_index.empty() ? -1 : *std::max_element(batch_index.begin(), batch_index.end());
  }
};

inline double min_pairwise_distance(std::span<const Location> points) {
  double best = std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < points.size(); ++i) {
    for (std::size_t j = i + 1; j < points.size(); ++j) best = std::min(best, distance(points[i], points[j]));
  }
  return best;
}

/// Uniform sample of n candidates without replacement, or n uniform points
/// in a rectangle.
inline Design random_design(const Region& region, std::size_t n, std::uint64_t seed) {
  Rng rng(seed);
  Design d;
  if (region.is_rectangle()) {
    const auto& r = region.rectangle();
    std::uniform_real_distribution<double> ux(r.xmin, r.xmax), uy(r.ymin, r.ymax);
    for (std::size_t i = 0; i < n; ++i) {
      const double x = ux(rng);
      d.points.push_back({x, uy(rng)});
    }
  } else {
    const auto& c = region.candidates();
    if (n > c.size()) {
      throw InvalidArgument("random_design: requested " + std::to_string(n) + " points but only " +
                            std::to_string(c.size()) + " candidates are available");
    }
    std::vector<std::size_t> pool(c.size());
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    for (std::size_t i = 0; i < n; ++i) {
      std::uniform_int_distribution<std::size_t> pick(i, pool.size() - 1);
      std::swap(pool[i], pool[pick(rng)]);
      d.candidate_index.push_back(pool[i]);
      d.points.push_back(c[pool[i]]);
    }
  }
  d.batch_index.assign(n, 0);
  return d;
}

struct InhibitoryOptions {
  std::size_t max_attempts = 100;
  /// Consecutive rejections, as a multiple of n, that trigger a restart.
  std::size_t rejection_factor = 10;
};

/// Sequential-rejection inhibitory design: points are drawn uniformly and
/// rejected when closer than delta to an accepted point. The whole design
/// restarts after rejection_factor * n consecutive rejections (or when the
/// candidate pool runs dry), up to max_attempts times. Every pair of
/// returned points is at least delta apart.
inline Design inhibitory_design(const Region& region, std::size_t n, double delta, std::uint64_t seed,
                                const InhibitoryOptions& options = {}) {
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidArgument("delta must be finite and non-negative");
  if (n == 0) throw InvalidArgument("inhibitory_design needs n >= 1");
  if (!region.is_rectangle() && n > region.candidates().size()) {
    throw InvalidArgument("inhibitory_design: n exceeds the number of candidates");
  }
  Rng rng(seed);
  std::size_t best = 0;
  const std::size_t patience = std::max<std::size_t>(1, options.rejection_factor * n);

  for (std::size_t attempt = 0; attempt < options.max_attempts; ++attempt) {
    Design d;
    d.delta = delta;
    d.rule = SpacingRule::kAllPairs;
    auto fits = [&](const Location& p) {
      return std::all_of(d.points.begin(), d.points.end(), [&](const Location& q) { return distance(p, q) >= delta; });
    };
    std::size_t rejections = 0;
    if (region.is_rectangle()) {
      const auto& r = region.rectangle();
      std::uniform_real_distribution<double> ux(r.xmin, r.xmax), uy(r.ymin, r.ymax);
      while (d.points.size() < n && rejections < patience) {
        const double x = ux(rng);
        const Location p{x, uy(rng)};
        if (fits(p)) {
          d.points.push_back(p);
          rejections = 0;
        } else {
          ++rejections;
        }
      }
    } else {
      const auto& c = region.candidates();
      std::vector<std::size_t> pool(c.size());
      std::iota(pool.begin(), pool.end(), std::size_t{0});
      while (d.points.size() < n && rejections < patience && !pool.empty()) {
        std::uniform_int_distribution<std::size_t> pick(0, pool.size() - 1);
        const std::size_t slot = pick(rng);
        const std::size_t idx = pool[slot];
        pool[slot] = pool.back();
        pool.pop_back();
        if (fits(c[idx])) {
          d.points.push_back(c[idx]);
          d.candidate_index.push_back(idx);
          rejections = 0;
        } else {
          ++rejections;
        }
      }
    }
    best = std::max(best, d.points.size());
    if (d.points.size() == n) {
      d.batch_index.assign(n, 0);
      return d;
    }
  }
  throw FeasibilityError("inhibitory_design: could not place " + std::to_string(n) + " points at spacing " +
                             std::to_string(delta) + " in " + std::to_string(options.max_attempts) +
                             " attempts (best " + std::to_string(best) + ")",
                         best);
}

/// k x k square lattice of cell centres over a rectangle.
inline Design square_lattice_design(const Rectangle& bounds, int k) {
  Design d;
  d.points = regular_grid(bounds, k);
  d.batch_index.assign(d.points.size(), 0);
  return d;
}

/// State of the adaptive algorithm between batches. `remaining` holds the
/// indices (ascending) of candidates still available, A_j; it never
/// intersects design.candidate_index.
struct AdaptiveState {
  std::shared_ptr<const std::vector<Location>> candidates;
  std::vector<std::size_t> remaining;
  Design design;
  ModelSpec model;
  SurveyData data;
  NuggetMode nugget_mode = NuggetMode::kConstant;
  /// Explicit per-design-point nuggets; overrides the data/model rule.
  std::optional<std::vector<double>> nuggets;
};

/// Builds the initial state: A_0 = X* minus the initial design.
inline AdaptiveState make_adaptive_state(std::shared_ptr<const std::vector<Location>> candidates, Design initial,
                                         ModelSpec model, SurveyData data = {},
                                         NuggetMode mode = NuggetMode::kConstant) {
  if (!candidates || candidates->empty()) throw InvalidArgument("adaptive design needs a candidate set");
  if (initial.candidate_index.size() != initial.points.size()) {
    throw InvalidArgument("initial design must be drawn from the candidate set");
  }
  std::vector<char> used(candidates->size(), 0);
  for (auto idx : initial.candidate_index) {
    if (idx >= candidates->size()) throw InvalidArgument("design candidate index out of range");
    used[idx] = 1;
  }
  AdaptiveState s;
  for (std::size_t i = 0; i < candidates->size(); ++i) {
    if (!used[i]) s.remaining.push_back(i);
  }
  s.candidates = std::move(candidates);
  s.design = std::move(initial);
  s.model = std::move(model);
  s.data = std::move(data);
  s.nugget_mode = mode;
  return s;
}

/// Nugget variance of each design point: the explicit override if set, else
/// from the data's counts when they cover the design, else the model's tau2.
inline std::vector<double> design_nuggets(const AdaptiveState& s) {
  if (s.nuggets) {
    if (s.nuggets->size() != s.design.size()) throw InvalidArgument("nugget override does not match design size");
    return *s.nuggets;
  }
  if (s.data.size() == s.design.size() && s.data.size() > 0 &&
      std::equal(s.design.points.begin(), s.design.points.end(), s.data.locations().begin())) {
    return s.data.nuggets(s.model.tau2, s.nugget_mode);
  }
  return std::vector<double>(s.design.size(), s.model.tau2);
}

struct BatchOptions {
  /// Recompute PV after each pick within a batch (no new data). Off by
  /// default: the batch ranks on one surface and delta does the spreading.
  bool sequential_pv = false;
};

struct BatchOutcome {
  std::vector<Location> batch;
  std::vector<std::size_t> batch_candidates;
  std::vector<double> batch_pv;  // PV of each pick at the moment it was picked
  std::vector<std::size_t> rejected;  // candidates removed by the delta test
  bool exhausted = false;  // A_j ran out before b additions
  AdaptiveState updated;
};

namespace detail {

struct Selection {
  std::vector<std::size_t> picked;
  std::vector<double> picked_pv;
  std::vector<std::size_t> rejected;
  std::vector<std::size_t> remaining;
  bool exhausted = false;
};

/// Greedy minimum-distance selection on a PV surface indexed by candidate.
/// Repeatedly takes the remaining candidate with the largest PV (ties to the
/// lowest index), accepts it when it is strictly farther than delta from
/// every design point and earlier pick, and otherwise drops it from the
/// pool. `on_pick` may refresh `pv` after each accepted point.
inline Selection select_batch(std::span<const Location> candidates, std::vector<std::size_t> remaining,
                              std::span<const Location> design, std::size_t b, double delta,
                              const std::function<const std::vector<double>&(std::size_t)>& on_pick,
                              const std::vector<double>& initial_pv) {
  Selection out;
  const std::vector<double>* pv = &initial_pv;
  std::vector<Location> chosen(design.begin(), design.end());
  std::vector<char> alive(candidates.size(), 0);
  for (auto i : remaining) alive[i] = 1;
  std::size_t alive_count = remaining.size();

  while (out.picked.size() < b && alive_count > 0) {
    std::size_t best = candidates.size();
    for (auto i : remaining) {
      if (alive[i] && (best == candidates.size() || (*pv)[i] > (*pv)[best])) best = i;
    }
    alive[best] = 0;
    --alive_count;
    const Location& x = candidates[best];
    const bool clear =
        std::all_of(chosen.begin(), chosen.end(), [&](const Location& p) { return distance(x, p) > delta; });
    if (clear) {
      out.picked.push_back(best);
      out.picked_pv.push_back((*pv)[best]);
      chosen.push_back(x);
      if (on_pick && out.picked.size() < b) pv = &on_pick(best);
    } else {
      out.rejected.push_back(best);
    }
  }
  out.exhausted = out.picked.size() < b;
  for (auto i : remaining) {
    if (alive[i]) out.remaining.push_back(i);
  }
  return out;
}

inline BatchOutcome apply_selection(const AdaptiveState& state, Selection sel, double delta) {
  BatchOutcome out;
  out.updated = state;
  auto& d = out.updated.design;
  const int batch = d.last_batch() + 1;
  for (auto idx : sel.picked) {
    const Location& p = (*state.candidates)[idx];
    out.batch.push_back(p);
    d.points.push_back(p);
    d.candidate_index.push_back(idx);
    d.batch_index.push_back(batch);
    if (out.updated.nuggets) out.updated.nuggets->push_back(state.model.tau2);
  }
  d.delta = delta;
  if (d.rule == SpacingRule::kNone) d.rule = SpacingRule::kNewPointsStrict;
  out.batch_candidates = std::move(sel.picked);
  out.batch_pv = std::move(sel.picked_pv);
  out.rejected = std::move(sel.rejected);
  out.exhausted = sel.exhausted;
  out.updated.remaining = std::move(sel.remaining);
  return out;
}

}  // namespace detail

/// PV at every candidate index for the current state (entries outside
/// `remaining` are computed too; they are simply never ranked).
inline PvTracker make_tracker(const AdaptiveState& state) {
  PvTracker tracker(state.model.matern, *state.candidates);
  const auto nug = design_nuggets(state);
  for (std::size_t i = 0; i < state.design.size(); ++i) tracker.add(state.design.points[i], nug[i]);
  return tracker;
}

/// One batch of the minimum-distance adaptive algorithm. PV is computed once
/// from the state at batch start; picks and delta-rejections are removed
/// from the available set permanently. Returns fewer than b points, with
/// `exhausted` set, if the available set empties first.
inline BatchOutcome adaptive_next_batch(const AdaptiveState& state, std::size_t b, double delta,
                                        const BatchOptions& options = {}) {
  if (b < 1) throw InvalidArgument("batch size must be at least 1");
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidArgument("delta must be finite and non-negative");
  if (!state.candidates) throw InvalidArgument("adaptive state has no candidate set");
  validate(state.model);

  std::vector<Location> pool;
  pool.reserve(state.remaining.size());
  for (auto i : state.remaining) pool.push_back((*state.candidates)[i]);
  const auto pv_pool = prediction_variance(state.model.matern, state.design.points, design_nuggets(state), pool);
  std::vector<double> pv(state.candidates->size(), 0.0);
  for (std::size_t k = 0; k < pool.size(); ++k) pv[state.remaining[k]] = pv_pool[k];

  std::optional<PvTracker> tracker;
  std::function<const std::vector<double>&(std::size_t)> on_pick;
  if (options.sequential_pv) {
    tracker.emplace(make_tracker(state));
    on_pick = [&](std::size_t idx) -> const std::vector<double>& {
      tracker->add((*state.candidates)[idx], state.model.tau2);
      return tracker->pv();
    };
  }
  auto sel = detail::select_batch(*state.candidates, state.remaining, state.design.points, b, delta, on_pick, pv);
  return detail::apply_selection(state, std::move(sel), delta);
}

/// Source of new responses (logit scale) at candidate indices.
using DataProvider = std::function<std::vector<double>(std::span<const std::size_t>)>;

struct AdaptiveRunOptions {
  std::size_t total_n = 100;
  std::size_t batch_size = 1;
  double delta = 0.0;
  /// Re-estimate the model by fit_ml on accumulated data before each batch.
  bool refit = false;
  FitOptions fit_options;
  BatchOptions batch_options;
};

struct AdaptiveRun {
  AdaptiveState state;
  std::vector<FitResult> fits;  // one per batch when refitting
  std::vector<std::string> warnings;
  bool exhausted = false;
  double final_apv = 0.0;  // mean PV over the candidate set under the final model
};

/// Runs the adaptive loop until total_n points are in the design or the
/// candidate set is exhausted. With a fixed model the PV surface is updated
/// incrementally; with refit the surface is rebuilt after each fit, and a
/// failed fit falls back to the last successful one with a warning.
inline AdaptiveRun run_adaptive_design(AdaptiveState state, const AdaptiveRunOptions& options,
                                       const DataProvider& provider = {}) {
  if (options.batch_size < 1) throw InvalidArgument("batch size must be at least 1");
  if (options.total_n < state.design.size()) throw InvalidArgument("total_n is smaller than the initial design");
  if (options.refit && !provider) throw InvalidArgument("refit mode needs a data provider");

  AdaptiveRun run;
  if (provider && state.data.size() < state.design.size()) {
    const std::span<const std::size_t> missing(state.design.candidate_index.data() + state.data.size(),
                                               state.design.size() - state.data.size());
    auto y = state.data.responses();
    const auto fresh = provider(missing);
    y.insert(y.end(), fresh.begin(), fresh.end());
    state.data = SurveyData::continuous(state.design.points, std::move(y));
  }

  std::optional<PvTracker> tracker;
  if (!options.refit) tracker.emplace(make_tracker(state));

  while (state.design.size() < options.total_n && !state.remaining.empty()) {
    if (options.refit) {
      try {
        auto fit = fit_ml(state.data, state.model.matern.kappa, options.fit_options);
        state.model = fit.estimates;
        run.fits.push_back(std::move(fit));
      } catch (const Error& e) {
        run.warnings.push_back(std::string("refit failed, keeping previous parameters: ") + e.what());
      }
      tracker.emplace(make_tracker(state));
    }
    const std::size_t b = std::min(options.batch_size, options.total_n - state.design.size());

    std::optional<PvTracker> scratch;
    std::function<const std::vector<double>&(std::size_t)> on_pick;
    if (options.batch_options.sequential_pv) {
      scratch.emplace(*tracker);
      on_pick = [&](std::size_t idx) -> const std::vector<double>& {
        scratch->add((*state.candidates)[idx], state.model.tau2);
        return scratch->pv();
      };
    }
    auto sel = detail::select_batch(*state.candidates, state.remaining, state.design.points, b, options.delta,
                                    on_pick, tracker->pv());
    auto outcome = detail::apply_selection(state, std::move(sel), options.delta);
    state = std::move(outcome.updated);
    for (auto idx : outcome.batch_candidates) tracker->add((*state.candidates)[idx], state.model.tau2);
    if (provider && !outcome.batch_candidates.empty()) {
      auto y = state.data.responses();
      const auto fresh = provider(outcome.batch_candidates);
      y.insert(y.end(), fresh.begin(), fresh.end());
      state.data = SurveyData::continuous(state.design.points, std::move(y));
    }
    if (outcome.exhausted) {
      run.exhausted = true;
      break;
    }
  }
  run.final_apv = tracker->average();
  run.state = std::move(state);
  return run;
}

}  // namespace geodesign
