#pragma once

#include <atomic>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "geodesign/designs.hpp"
#include "geodesign/serialization.hpp"
#include "geodesign/simulate.hpp"
#include "geodesign/stats.hpp"

namespace geodesign {

/// Design-comparison experiment: each replicate simulates one field on a
/// grid, then evaluates a non-adaptive inhibitory design and every adaptive
/// variant (initial inhibitory n0 plus batches of b) on that same field.
struct ExperimentConfig {
  int grid_k = 64;
  ModelSpec model{{0.0}, {1.0, 0.05, 1.5}, 0.0};
  std::size_t n_total = 100;
  std::vector<std::size_t> n0_values{30, 40, 50, 60, 70, 80, 90};
  std::vector<std::size_t> batch_sizes{1, 5, 10};
  double delta = 0.03;
  std::size_t replicates = 100;
  std::uint64_t seed = 1;
  bool refit = false;
  /// Worker threads; 0 means hardware concurrency.
  unsigned threads = 0;
};

inline void validate(const ExperimentConfig& c) {
  if (c.grid_k < 2) throw InvalidArgument("grid_k must be at least 2");
  validate(c.model);
  if (c.n_total == 0) throw InvalidArgument("n_total must be positive");
  if (c.n0_values.empty() || c.batch_sizes.empty()) throw InvalidArgument("n0_values and batch_sizes must be nonempty");
  for (auto n0 : c.n0_values) {
    if (n0 == 0 || n0 > c.n_total) throw InvalidArgument("every n0 must satisfy 0 < n0 <= n_total");
  }
  for (auto b : c.batch_sizes) {
    if (b == 0) throw InvalidArgument("batch sizes must be positive");
  }
  if (!(c.delta >= 0.0)) throw InvalidArgument("delta must be non-negative");
  if (c.replicates == 0) throw InvalidArgument("replicates must be positive");
  const auto cells = static_cast<std::size_t>(c.grid_k) * static_cast<std::size_t>(c.grid_k);
  if (c.n_total > cells) throw InvalidArgument("n_total exceeds the number of grid cells");
}

struct ExperimentCell {
  std::string strategy;  // "NAGD" or "AGD"
  std::size_t n0 = 0;    // n_total for NAGD
  std::size_t b = 0;     // 0 for NAGD
  double mean_apv = 0.0;
  double se_apv = 0.0;
  std::vector<double> apv;  // one entry per successful replicate, in replicate order
};

struct ExperimentResult {
  ExperimentConfig config;
  std::vector<ExperimentCell> cells;
  std::size_t failed_replicates = 0;
  std::vector<std::string> warnings;

  [[nodiscard]] const ExperimentCell& cell(const std::string& strategy, std::size_t n0, std::size_t b) const {
    for (const auto& c : cells) {
      if (c.strategy == strategy && c.n0 == n0 && c.b == b) return c;
    }
    throw InvalidArgument("no experiment cell " + strategy + " n0=" + std::to_string(n0) + " b=" + std::to_string(b));
  }
  [[nodiscard]] const ExperimentCell& nagd() const { return cells.front(); }
};

namespace detail {

enum SeedTag : std::uint64_t { kFieldStream = 1, kNoiseStream = 2, kNagdStream = 3, kInitialStream = 1000 };

inline double apv_under(const ModelSpec& truth, const std::vector<Location>& grid, const Design& d) {
  PvTracker t(truth.matern, grid);
  for (const auto& p : d.points) t.add(p, truth.tau2);
  return t.average();
}

}  // namespace detail

/// Runs every replicate (in parallel, seeds split from config.seed by
/// replicate index) and aggregates APV per (strategy, n0, b). A replicate
/// that throws is excluded from every cell; more than 5% failures aborts.
inline ExperimentResult run_experiment(const ExperimentConfig& config) {
  validate(config);
  const auto grid = std::make_shared<const std::vector<Location>>(regular_grid(Rectangle::unit_square(), config.grid_k));
  const Region region(*grid);
  const FieldSimulator simulator(*grid, config.model);

  ExperimentResult result;
  result.config = config;
  result.cells.push_back({"NAGD", config.n_total, 0, 0.0, 0.0, {}});
  for (auto n0 : config.n0_values) {
    for (auto b : config.batch_sizes) result.cells.push_back({"AGD", n0, b, 0.0, 0.0, {}});
  }
  if (simulator.jitter_applied()) result.warnings.emplace_back("field covariance needed diagonal jitter");

  const std::size_t ncells = result.cells.size();
  std::vector<std::vector<double>> apv(config.replicates, std::vector<double>(ncells, 0.0));
  std::vector<char> failed(config.replicates, 0);
  std::vector<std::string> failure_messages(config.replicates);

  auto run_replicate = [&](std::size_t r) {
    const auto field = simulator.draw(derive_seed(config.seed, r, detail::kFieldStream));
    std::vector<double> observed = field.values;
    for (std::size_t i = 0; i < observed.size(); ++i) observed[i] += config.model.beta[0];
    if (config.model.tau2 > 0.0) {
      Rng noise(derive_seed(config.seed, r, detail::kNoiseStream));
      std::normal_distribution<double> z(0.0, std::sqrt(config.model.tau2));
      for (double& v : observed) v += z(noise);
    }
    const DataProvider provider = [&](std::span<const std::size_t> idx) {
      std::vector<double> y;
      y.reserve(idx.size());
      for (auto i : idx) y.push_back(observed[i]);
      return y;
    };

    std::size_t cell = 0;
    const auto nagd = inhibitory_design(region, config.n_total, config.delta,
                                        derive_seed(config.seed, r, detail::kNagdStream));
    apv[r][cell++] = detail::apv_under(config.model, *grid, nagd);

    for (auto n0 : config.n0_values) {
      const auto initial = inhibitory_design(region, n0, config.delta,
                                             derive_seed(config.seed, r, detail::kInitialStream + n0));
      for (auto b : config.batch_sizes) {
        AdaptiveRunOptions opt;
        opt.total_n = config.n_total;
        opt.batch_size = b;
        opt.delta = config.delta;
        opt.refit = config.refit;
        opt.fit_options.region_diameter = std::sqrt(2.0);
        auto state = make_adaptive_state(grid, initial, config.model);
        const auto run = run_adaptive_design(std::move(state), opt, config.refit ? provider : DataProvider{});
        apv[r][cell++] = config.refit ? detail::apv_under(config.model, *grid, run.state.design) : run.final_apv;
      }
    }
  };

  const unsigned threads =
      std::max(1u, std::min<unsigned>(config.threads ? config.threads : std::thread::hardware_concurrency(),
                                      static_cast<unsigned>(config.replicates)));
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t r = next++; r < config.replicates; r = next++) {
      try {
        run_replicate(r);
      } catch (const std::exception& e) {
        failed[r] = 1;
        failure_messages[r] = e.what();
      }
    }
  };
  std::vector<std::thread> pool;
  for (unsigned t = 1; t < threads; ++t) pool.emplace_back(worker);
  worker();
  for (auto& t : pool) t.join();

  for (std::size_t r = 0; r < config.replicates; ++r) {
    if (failed[r]) {
      ++result.failed_replicates;
      result.warnings.push_back("replicate " + std::to_string(r) + " failed: " + failure_messages[r]);
      continue;
    }
    for (std::size_t c = 0; c < ncells; ++c) result.cells[c].apv.push_back(apv[r][c]);
  }
  if (result.failed_replicates * 20 > config.replicates) {
    throw Error("experiment aborted: " + std::to_string(result.failed_replicates) + " of " +
                std::to_string(config.replicates) + " replicates failed");
  }
  for (auto& c : result.cells) {
    c.mean_apv = mean(c.apv);
    c.se_apv = standard_error(c.apv);
  }
  return result;
}

// ---- serialization -------------------------------------------------------

inline void to_json(nlohmann::ordered_json& j, const ExperimentConfig& c) {
  j = nlohmann::ordered_json{{"grid_k", c.grid_k},         {"model", c.model},
                             {"n_total", c.n_total},       {"n0_values", c.n0_values},
                             {"batch_sizes", c.batch_sizes}, {"delta", c.delta},
                             {"replicates", c.replicates}, {"seed", c.seed},
                             {"refit", c.refit}};
}

/// Reads a config; absent fields keep their defaults, unknown fields are
/// rejected.
inline void from_json(const nlohmann::ordered_json& j, ExperimentConfig& c) {
  static const std::vector<std::string> known{"grid_k", "model",    "n_total", "n0_values", "batch_sizes",
                                              "delta",  "replicates", "seed",  "refit",     "threads"};
  for (const auto& [key, value] : j.items()) {
    if (std::find(known.begin(), known.end(), key) == known.end()) {
      throw InvalidArgument("unknown experiment config field '" + key + "'");
    }
  }
  c.grid_k = j.value("grid_k", c.grid_k);
  if (j.contains("model")) from_json(j.at("model"), c.model);
  c.n_total = j.value("n_total", c.n_total);
  if (j.contains("n0_values")) c.n0_values = j.at("n0_values").get<std::vector<std::size_t>>();
  if (j.contains("batch_sizes")) c.batch_sizes = j.at("batch_sizes").get<std::vector<std::size_t>>();
  c.delta = j.value("delta", c.delta);
  c.replicates = j.value("replicates", c.replicates);
  c.seed = j.value("seed", c.seed);
  c.refit = j.value("refit", c.refit);
  c.threads = j.value("threads", c.threads);
}

inline void to_json(nlohmann::ordered_json& j, const ExperimentCell& c) {
  j = nlohmann::ordered_json{{"strategy", c.strategy}, {"n0", c.n0},         {"b", c.b},
                             {"mean_apv", c.mean_apv}, {"se_apv", c.se_apv}, {"replicates", c.apv.size()},
                             {"apv", c.apv}};
}
inline void from_json(const nlohmann::ordered_json& j, ExperimentCell& c) {
  c.strategy = j.at("strategy").get<std::string>();
  c.n0 = j.at("n0").get<std::size_t>();
  c.b = j.at("b").get<std::size_t>();
  c.mean_apv = j.at("mean_apv").get<double>();
  c.se_apv = j.at("se_apv").get<double>();
  c.apv = j.at("apv").get<std::vector<double>>();
}

inline void to_json(nlohmann::ordered_json& j, const ExperimentResult& r) {
  j = nlohmann::ordered_json{{"config", r.config},
                             {"cells", r.cells},
                             {"failed_replicates", r.failed_replicates},
                             {"warnings", r.warnings}};
}
inline void from_json(const nlohmann::ordered_json& j, ExperimentResult& r) {
  from_json(j.at("config"), r.config);
  r.cells = j.at("cells").get<std::vector<ExperimentCell>>();
  r.failed_replicates = j.at("failed_replicates").get<std::size_t>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
}

enum class ResultFormat { kTable, kCsv, kJson, kAll };

inline ResultFormat parse_result_format(const std::string& s) {
  if (s == "table") return ResultFormat::kTable;
  if (s == "csv") return ResultFormat::kCsv;
  if (s == "json") return ResultFormat::kJson;
  if (s == "all") return ResultFormat::kAll;
  throw InvalidArgument("unknown output format '" + s + "' (expected table, csv, json or all)");
}

namespace detail {

inline std::string exact(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

}  // namespace detail

/// Summary CSV: strategy,n0,b,mean_apv,se_apv,replicates. Reals are written
/// with 17 significant digits so they parse back exactly.
inline std::string results_csv(const ExperimentResult& r) {
  std::ostringstream os;
  os << "strategy,n0,b,mean_apv,se_apv,replicates\n";
  for (const auto& c : r.cells) {
    os << c.strategy << ',' << c.n0 << ',' << c.b << ',' << detail::exact(c.mean_apv) << ','
       << detail::exact(c.se_apv) << ',' << c.apv.size() << '\n';
  }
  return os.str();
}

/// Long-format per-replicate APV: strategy,n0,b,replicate,apv.
inline std::string replicates_csv(const ExperimentResult& r) {
  std::ostringstream os;
  os << "strategy,n0,b,replicate,apv\n";
  for (const auto& c : r.cells) {
    for (std::size_t k = 0; k < c.apv.size(); ++k) {
      os << c.strategy << ',' << c.n0 << ',' << c.b << ',' << k << ',' << detail::exact(c.apv[k]) << '\n';
    }
  }
  return os.str();
}

inline std::string results_table(const ExperimentResult& r) {
  std::ostringstream os;
  os << std::left << std::setw(9) << "strategy" << std::right << std::setw(6) << "n0" << std::setw(5) << "b"
     << std::setw(12) << "mean_apv" << std::setw(11) << "se_apv" << std::setw(12) << "replicates" << '\n';
  os << std::fixed;
  for (const auto& c : r.cells) {
    os << std::left << std::setw(9) << c.strategy << std::right << std::setw(6) << c.n0 << std::setw(5) << c.b
       << std::setw(12) << std::setprecision(5) << c.mean_apv << std::setw(11) << std::setprecision(5) << c.se_apv
       << std::setw(12) << c.apv.size() << '\n';
  }
  os << "grid " << r.config.grid_k << "x" << r.config.grid_k << ", n_total " << r.config.n_total << ", delta "
     << std::defaultfloat << r.config.delta << ", seed " << r.config.seed << ", refit "
     << (r.config.refit ? "yes" : "no") << ", failed replicates " << r.failed_replicates << '\n';
  for (const auto& w : r.warnings) os << "warning: " << w << '\n';
  return os.str();
}

namespace detail {

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw Error("failed writing " + path.string());
}

}  // namespace detail

/// Writes results.csv + replicates.csv, results.json, and/or summary.txt
/// into out_dir. Returns the paths written.
inline std::vector<std::filesystem::path> emit_results(const ExperimentResult& r, const std::filesystem::path& out_dir,
                                                       ResultFormat format = ResultFormat::kAll) {
  std::error_code ec;
  std::filesystem::create_directories(out_dir, ec);
  if (ec) throw Error("cannot create output directory " + out_dir.string() + ": " + ec.message());
  std::vector<std::filesystem::path> written;
  auto emit = [&](const char* name, const std::string& text) {
    detail::write_file(out_dir / name, text);
    written.push_back(out_dir / name);
  };
  if (format == ResultFormat::kCsv || format == ResultFormat::kAll) {
    emit("results.csv", results_csv(r));
    emit("replicates.csv", replicates_csv(r));
  }
  if (format == ResultFormat::kJson || format == ResultFormat::kAll) {
    emit("results.json", nlohmann::ordered_json(r).dump(2) + "\n");
  }
  if (format == ResultFormat::kTable || format == ResultFormat::kAll) emit("summary.txt", results_table(r));
  return written;
}

}  // namespace geodesign
