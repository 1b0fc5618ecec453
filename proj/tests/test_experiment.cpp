#include <filesystem>
#include <fstream>
#include <sstream>

#include <gtest/gtest.h>

#include "geodesign/campaign/csv.hpp"
#include "geodesign/experiment.hpp"
#include "geodesign/stats.hpp"

using namespace geodesign;

namespace {

ExperimentConfig small_config() {
  ExperimentConfig c;
  c.grid_k = 16;
  c.model = {{0.0}, {1.0, 0.1, 1.5}, 0.0};
  c.n_total = 24;
  c.n0_values = {8, 16};
  c.batch_sizes = {1, 4};
  c.delta = 0.05;
  c.replicates = 6;
  c.seed = 9;
  c.threads = 2;
  return c;
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST(Stats, PairedTTestKnownValues) {
  // Differences 1,2,3,4,5: mean 3, sd sqrt(2.5), t = 3 / (sqrt(2.5)/sqrt(5)).
  const std::vector<double> a{0, 0, 0, 0, 0};
  const std::vector<double> b{1, 2, 3, 4, 5};
  const auto t = paired_t_test(a, b);
  EXPECT_DOUBLE_EQ(t.mean_difference, 3.0);
  EXPECT_NEAR(t.t, 3.0 / std::sqrt(0.5), 1e-12);
  // Student t with 4 df has F(t) = 1/2 + t (t^2 + 6) / (2 (t^2 + 4)^1.5).
  const double x = t.t * t.t;
  EXPECT_NEAR(t.p_one_sided, 0.5 - t.t * (x + 6.0) / (2.0 * std::pow(x + 4.0, 1.5)), 1e-12);
  EXPECT_NEAR(t.p_one_sided, 0.0066178, 1e-7);
  EXPECT_NEAR(t.p_two_sided, 2 * t.p_one_sided, 1e-15);
  EXPECT_THROW(paired_t_test(a, std::vector<double>{1.0}), InvalidArgument);
}

TEST(Stats, MeanAndStandardError) {
  const std::vector<double> v{1, 2, 3, 4};
  EXPECT_DOUBLE_EQ(mean(v), 2.5);
  EXPECT_NEAR(stddev(v), std::sqrt(5.0 / 3.0), 1e-15);
  EXPECT_NEAR(standard_error(v), std::sqrt(5.0 / 3.0) / 2.0, 1e-15);
}

TEST(Experiment, ShapeAndDeterminism) {
  const auto cfg = small_config();
  const auto r = run_experiment(cfg);
  ASSERT_EQ(r.cells.size(), 1u + 2u * 2u);
  EXPECT_EQ(r.cells.front().strategy, "NAGD");
  EXPECT_EQ(r.cells.front().n0, cfg.n_total);
  for (const auto& c : r.cells) {
    EXPECT_EQ(c.apv.size(), cfg.replicates);
    EXPECT_TRUE(std::isfinite(c.mean_apv));
    EXPECT_GT(c.mean_apv, 0.0);
    EXPECT_LT(c.mean_apv, 1.0);
  }
  EXPECT_EQ(r.failed_replicates, 0u);

  auto single = cfg;
  single.threads = 1;
  const auto again = run_experiment(single);
  ASSERT_EQ(again.cells.size(), r.cells.size());
  for (std::size_t i = 0; i < r.cells.size(); ++i) EXPECT_EQ(again.cells[i].apv, r.cells[i].apv);
  EXPECT_EQ(r.cell("AGD", 8, 4).apv, again.cell("AGD", 8, 4).apv);
}

TEST(Experiment, RefitModeRuns) {
  auto cfg = small_config();
  cfg.refit = true;
  cfg.replicates = 2;
  cfg.n0_values = {20};
  cfg.batch_sizes = {2};
  const auto r = run_experiment(cfg);
  EXPECT_EQ(r.cells.size(), 2u);
  EXPECT_EQ(r.failed_replicates, 0u);
}

TEST(Experiment, ConfigValidation) {
  auto cfg = small_config();
  cfg.n0_values = {30};
  EXPECT_THROW(run_experiment(cfg), InvalidArgument);
  cfg = small_config();
  cfg.batch_sizes = {0};
  EXPECT_THROW(run_experiment(cfg), InvalidArgument);
  cfg = small_config();
  cfg.grid_k = 1;
  EXPECT_THROW(run_experiment(cfg), InvalidArgument);
}

TEST(Experiment, ConfigJson) {
  const auto cfg = small_config();
  const nlohmann::ordered_json j = cfg;
  ExperimentConfig back;
  from_json(j, back);
  EXPECT_EQ(nlohmann::ordered_json(back), j);
  EXPECT_EQ(ExperimentConfig{}.n0_values, (std::vector<std::size_t>{30, 40, 50, 60, 70, 80, 90}));
  EXPECT_THROW(from_json(nlohmann::ordered_json{{"gridk", 4}}, back), InvalidArgument);
}

TEST(Emit, RoundTrips) {
  const auto r = run_experiment(small_config());
  const auto dir = std::filesystem::temp_directory_path() / "geodesign_emit_test";
  std::filesystem::remove_all(dir);
  const auto written = emit_results(r, dir, ResultFormat::kAll);
  EXPECT_EQ(written.size(), 4u);

  ExperimentResult back;
  from_json(nlohmann::ordered_json::parse(slurp(dir / "results.json")), back);
  EXPECT_EQ(nlohmann::ordered_json(back), nlohmann::ordered_json(r));

  const auto csv = campaign::parse_csv(slurp(dir / "results.csv"));
  EXPECT_EQ(csv.header, (std::vector<std::string>{"strategy", "n0", "b", "mean_apv", "se_apv", "replicates"}));
  ASSERT_EQ(csv.rows.size(), r.cells.size());
  for (std::size_t i = 0; i < csv.rows.size(); ++i) {
    const auto m = campaign::parse_real(csv.rows[i][3]);
    const auto s = campaign::parse_real(csv.rows[i][4]);
    ASSERT_TRUE(m && s);
    EXPECT_EQ(*m, r.cells[i].mean_apv);
    EXPECT_EQ(*s, r.cells[i].se_apv);
  }
  const auto reps = campaign::parse_csv(slurp(dir / "replicates.csv"));
  EXPECT_EQ(reps.rows.size(), r.cells.size() * 6);
  for (const auto& row : reps.rows) EXPECT_EQ(*campaign::parse_real(row[4]), r.cell(row[0], std::stoul(row[1]), std::stoul(row[2])).apv[std::stoul(row[3])]);
  std::filesystem::remove_all(dir);
}

TEST(Emit, TableHasOneRowPerCell) {
  ExperimentConfig cfg = small_config();
  const auto r = run_experiment(cfg);
  const auto table = results_table(r);
  std::istringstream in(table);
  std::string line;
  int nagd = 0, agd = 0;
  while (std::getline(in, line)) {
    if (line.rfind("NAGD", 0) == 0) ++nagd;
    if (line.rfind("AGD", 0) == 0) ++agd;
  }
  EXPECT_EQ(nagd, 1);
  EXPECT_EQ(agd, static_cast<int>(cfg.n0_values.size() * cfg.batch_sizes.size()));
}

TEST(Emit, ReportsIoErrorWithPath) {
  const auto r = run_experiment(small_config());
  try {
    emit_results(r, "/proc/geodesign/cannot", ResultFormat::kCsv);
    FAIL();
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("/proc/geodesign/cannot"), std::string::npos);
  }
  EXPECT_THROW(parse_result_format("xml"), InvalidArgument);
}
