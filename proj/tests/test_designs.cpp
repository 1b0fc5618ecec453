#include <cmath>
#include <memory>
#include <random>
#include <set>

#include <gtest/gtest.h>

#include "geodesign/designs.hpp"
#include "geodesign/random.hpp"
#include "geodesign/simulate.hpp"
#include "oracles.hpp"

using namespace geodesign;

namespace {

std::shared_ptr<const std::vector<Location>> unit_grid(int k) {
  return std::make_shared<const std::vector<Location>>(regular_grid(Rectangle::unit_square(), k));
}

Design pick(const std::vector<Location>& c, std::vector<std::size_t> idx) {
  Design d;
  for (auto i : idx) {
    d.points.push_back(c[i]);
    d.candidate_index.push_back(i);
    d.batch_index.push_back(0);
  }
  return d;
}

}  // namespace

TEST(RandomDesign, WholeCandidateSet) {
  const auto g = regular_grid(Rectangle::unit_square(), 5);
  const auto d = random_design(Region(g), g.size(), 3);
  std::set<std::size_t> seen(d.candidate_index.begin(), d.candidate_index.end());
  EXPECT_EQ(seen.size(), g.size());
  EXPECT_THROW(random_design(Region(g), g.size() + 1, 3), InvalidArgument);
}

TEST(RandomDesign, Deterministic) {
  const auto g = regular_grid(Rectangle::unit_square(), 10);
  EXPECT_EQ(random_design(Region(g), 17, 5).candidate_index, random_design(Region(g), 17, 5).candidate_index);
  EXPECT_NE(random_design(Region(g), 17, 5).candidate_index, random_design(Region(g), 17, 6).candidate_index);
}

TEST(RandomDesign, SinglePointUniform) {
  const auto g = regular_grid(Rectangle::unit_square(), 64);
  const Region r(g);
  const std::size_t draws = 40960;
  std::vector<int> hits(g.size(), 0);
  for (std::size_t s = 0; s < draws; ++s) ++hits[random_design(r, 1, derive_seed(17, s)).candidate_index[0]];
  // Pearson chi-square over all cells: 4095 df, sd sqrt(2 * 4095).
  const double expected = static_cast<double>(draws) / 4096.0;
  double chi2 = 0.0;
  for (int h : hits) chi2 += (h - expected) * (h - expected) / expected;
  EXPECT_LT(std::abs(chi2 - 4095.0), 5.0 * std::sqrt(2.0 * 4095.0)) << chi2;
}

TEST(Inhibitory, SpacingHolds) {
  const auto g = regular_grid(Rectangle::unit_square(), 64);
  for (std::uint64_t s = 0; s < 20; ++s) {
    const auto d = inhibitory_design(Region(g), 100, 0.03, s);
    ASSERT_EQ(d.size(), 100u);
    EXPECT_GE(min_pairwise_distance(d.points), 0.03);
    EXPECT_EQ(d.rule, SpacingRule::kAllPairs);
  }
  const auto cont = inhibitory_design(Region(Rectangle::unit_square()), 50, 0.05, 4);
  EXPECT_GE(min_pairwise_distance(cont.points), 0.05);
}

TEST(Inhibitory, SinglePointAndInfeasible) {
  const auto g = regular_grid(Rectangle::unit_square(), 8);
  EXPECT_EQ(inhibitory_design(Region(g), 1, 10.0, 1).size(), 1u);
  try {
    inhibitory_design(Region(g), 2, 5.0, 1, {5, 10});
    FAIL() << "expected FeasibilityError";
  } catch (const FeasibilityError& e) {
    EXPECT_EQ(e.best_achieved(), 1u);
  }
}

TEST(Adaptive, SingletonIsArgmax) {
  const auto g = unit_grid(12);
  const ModelSpec m{{0.0}, {1.0, 0.1, 1.5}, 0.0};
  const auto init = pick(*g, {0, 13, 77, 140});
  const auto state = make_adaptive_state(g, init, m);
  const auto out = adaptive_next_batch(state, 1, 0.0);
  const auto pv = prediction_variance(m.matern, init.points, std::vector<double>(4, 0.0), *g);
  std::size_t best = state.remaining.front();
  for (auto i : state.remaining) {
    if (pv[i] > pv[best]) best = i;
  }
  ASSERT_EQ(out.batch_candidates.size(), 1u);
  EXPECT_EQ(out.batch_candidates[0], best);
}

TEST(Adaptive, TwoCandidateExample) {
  // Candidate 0 has the higher PV but lies within delta of the design point.
  const std::vector<Location> c{{0.1, 0.0}, {0.9, 0.0}};
  const std::vector<Location> design{{0.12, 0.0}};
  const std::vector<double> pv{0.9, 0.8};
  const auto sel = detail::select_batch(c, {0, 1}, design, 1, 0.05, {}, pv);
  EXPECT_EQ(sel.picked, std::vector<std::size_t>{1});
  EXPECT_EQ(sel.picked_pv, std::vector<double>{0.8});
  EXPECT_EQ(sel.rejected, std::vector<std::size_t>{0});
  EXPECT_TRUE(sel.remaining.empty());
  EXPECT_FALSE(sel.exhausted);
}

TEST(Adaptive, TiesGoToLowestIndex) {
  const std::vector<Location> c{{0.0, 0.0}, {0.5, 0.0}, {1.0, 0.0}};
  const std::vector<double> pv{0.3, 0.7, 0.7};
  const auto sel = detail::select_batch(c, {0, 1, 2}, {}, 2, 0.1, {}, pv);
  EXPECT_EQ(sel.picked, (std::vector<std::size_t>{1, 2}));
}

TEST(Adaptive, MatchesStepByStepTrace) {
  std::mt19937_64 rng(31);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int trial = 0; trial < 40; ++trial) {
    const std::size_t n = 10 + static_cast<std::size_t>(trial % 11);
    auto cands = std::make_shared<std::vector<Location>>();
    for (std::size_t i = 0; i < n; ++i) cands->push_back({u(rng), u(rng)});
    const ModelSpec m{{0.0}, {1.0, 0.1 + 0.2 * u(rng), 1.5}, trial % 3 == 0 ? 0.1 : 0.0};
    const auto init = pick(*cands, {0, 1});
    const auto state = make_adaptive_state(cands, init, m);
    const std::size_t b = 1 + static_cast<std::size_t>(trial % 5);
    const double delta = 0.05 + 0.2 * u(rng);
    const auto out = adaptive_next_batch(state, b, delta);

    const auto pv = oracle::prediction_variance(init.points, std::vector<double>(2, m.tau2), *cands, 1.0,
                                                m.matern.phi, 1.5);
    std::set<std::size_t> avail(state.remaining.begin(), state.remaining.end());
    const auto tr = oracle::adaptive_trace(*cands, avail, init.points, pv, b, delta);
    EXPECT_EQ(out.batch_candidates, tr.picked);
    EXPECT_EQ(out.rejected, tr.rejected);
    EXPECT_EQ(std::set<std::size_t>(out.updated.remaining.begin(), out.updated.remaining.end()), tr.remaining);
    EXPECT_EQ(out.exhausted, tr.picked.size() < b);
    EXPECT_EQ(out.updated.remaining.size(), state.remaining.size() - out.batch_candidates.size() - out.rejected.size());
  }
}

TEST(Adaptive, BatchRespectsDeltaAndGreedyDominance) {
  const auto g = unit_grid(32);
  const ModelSpec m{{0.0}, {1.0, 0.05, 1.5}, 0.0};
  const auto init = inhibitory_design(Region(*g), 30, 0.03, 2);
  const auto state = make_adaptive_state(g, init, m);
  const auto out = adaptive_next_batch(state, 10, 0.03);
  ASSERT_EQ(out.batch.size(), 10u);
  std::vector<Location> placed = init.points;
  for (const auto& p : out.batch) {
    for (const auto& q : placed) EXPECT_GT(distance(p, q), 0.03);
    placed.push_back(p);
  }
  const auto pv = prediction_variance(m.matern, init.points, std::vector<double>(30, 0.0), *g);
  for (auto i : state.remaining) {
    const bool survives = std::all_of(init.points.begin(), init.points.end(),
                                      [&](const Location& q) { return distance((*g)[i], q) > 0.03; });
    if (survives) EXPECT_GE(out.batch_pv[0], pv[i]);
  }
  for (std::size_t k = 0; k < out.updated.design.size(); ++k) {
    EXPECT_EQ(out.updated.design.batch_index[k], k < 30 ? 0 : 1);
  }
  const auto again = adaptive_next_batch(state, 10, 0.03);
  EXPECT_EQ(again.batch_candidates, out.batch_candidates);
}

TEST(Adaptive, ExhaustionGivesShortBatch) {
  const auto c = std::make_shared<const std::vector<Location>>(
      std::vector<Location>{{0.0, 0.0}, {0.1, 0.0}, {0.2, 0.0}, {0.9, 0.9}});
  const auto state = make_adaptive_state(c, pick(*c, {0}), {{0.0}, {1.0, 0.2, 1.5}, 0.0});
  const auto out = adaptive_next_batch(state, 3, 0.15);
  EXPECT_TRUE(out.exhausted);
  EXPECT_LT(out.batch.size(), 3u);
  EXPECT_THROW(adaptive_next_batch(state, 0, 0.1), InvalidArgument);
}

TEST(Adaptive, SequentialPvMatchesTrackerRanking) {
  const auto g = unit_grid(16);
  const ModelSpec m{{0.0}, {1.0, 0.1, 1.5}, 0.0};
  const auto init = pick(*g, {0, 50, 200});
  const auto state = make_adaptive_state(g, init, m);
  BatchOptions opts;
  opts.sequential_pv = true;
  const auto seq = adaptive_next_batch(state, 5, 0.0, opts);
  // Five singleton batches pick the same points.
  auto s = state;
  std::vector<std::size_t> singles;
  for (int i = 0; i < 5; ++i) {
    auto o = adaptive_next_batch(s, 1, 0.0);
    singles.push_back(o.batch_candidates[0]);
    s = std::move(o.updated);
  }
  EXPECT_EQ(seq.batch_candidates, singles);
}

TEST(RunAdaptive, InitialOnlyWhenTotalEqualsN0) {
  const auto g = unit_grid(16);
  const ModelSpec m{{0.0}, {1.0, 0.1, 1.5}, 0.0};
  const auto init = inhibitory_design(Region(*g), 12, 0.03, 1);
  AdaptiveRunOptions opts;
  opts.total_n = 12;
  const auto run = run_adaptive_design(make_adaptive_state(g, init, m), opts);
  EXPECT_EQ(run.state.design.points, init.points);
}

TEST(RunAdaptive, ReachesTotalWithLineage) {
  const auto g = unit_grid(24);
  const ModelSpec m{{0.0}, {1.0, 0.05, 1.5}, 0.0};
  const auto init = inhibitory_design(Region(*g), 20, 0.03, 1);
  AdaptiveRunOptions opts;
  opts.total_n = 47;
  opts.batch_size = 10;
  opts.delta = 0.03;
  const auto run = run_adaptive_design(make_adaptive_state(g, init, m), opts);
  ASSERT_EQ(run.state.design.size(), 47u);
  EXPECT_EQ(run.state.design.last_batch(), 3);
  EXPECT_NEAR(run.final_apv, apv(m, run.state.design.points, std::span<const Location>(*g)), 1e-10);
}

TEST(RunAdaptive, RefitLoopUsesProvider) {
  const auto g = unit_grid(20);
  const ModelSpec truth{{0.0}, {1.0, 0.1, 1.5}, 0.0};
  const auto field = simulate_field(*g, truth, 4);
  const auto init = inhibitory_design(Region(*g), 25, 0.03, 1);
  AdaptiveRunOptions opts;
  opts.total_n = 40;
  opts.batch_size = 5;
  opts.delta = 0.03;
  opts.refit = true;
  ModelSpec wrong = truth;
  wrong.matern.phi = 0.3;
  std::size_t calls = 0;
  const auto run = run_adaptive_design(make_adaptive_state(g, init, wrong), opts, [&](std::span<const std::size_t> idx) {
    ++calls;
    std::vector<double> y;
    for (auto i : idx) y.push_back(field.values[i]);
    return y;
  });
  EXPECT_EQ(run.state.design.size(), 40u);
  EXPECT_EQ(run.state.data.size(), 40u);
  EXPECT_EQ(run.fits.size(), 3u);
  EXPECT_EQ(calls, 4u);
  EXPECT_NE(run.state.model.matern.phi, 0.3);
  EXPECT_THROW(run_adaptive_design(make_adaptive_state(g, init, wrong), opts), InvalidArgument);
}

TEST(RunAdaptive, SingletonBeatsNonAdaptiveInPairedReplicates) {
  const auto g = unit_grid(64);
  const ModelSpec m{{0.0}, {1.0, 0.05, 1.5}, 0.0};
  int wins = 0;
  const int reps = 100;
  for (int r = 0; r < reps; ++r) {
    const auto seed = derive_seed(2718, static_cast<std::uint64_t>(r));
    const auto nagd = inhibitory_design(Region(*g), 100, 0.03, derive_seed(seed, 3));
    const auto init = inhibitory_design(Region(*g), 30, 0.03, derive_seed(seed, 1030));
    AdaptiveRunOptions opts;
    opts.total_n = 100;
    opts.batch_size = 1;
    opts.delta = 0.03;
    const auto run = run_adaptive_design(make_adaptive_state(g, init, m), opts);
    if (run.final_apv < apv(m, nagd.points, std::span<const Location>(*g))) ++wins;
  }
  EXPECT_GE(wins, 95);
}
