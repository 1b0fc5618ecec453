// geodesign command-line front end: design experiments, offline campaign
// management, and the HTTP campaign server.

#include <csignal>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>

#include "geodesign/campaign/server.hpp"
#include "geodesign/experiment.hpp"

namespace gd = geodesign;
namespace gc = geodesign::campaign;

namespace {

std::string read_text(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw gd::InvalidArgument("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

int exit_code(std::exception_ptr ep) {
  const auto [status, body] = gc::error_response(ep);
  std::cerr << body.dump(2) << '\n';
  switch (status) {
    case 400:
    case 422:
      return 2;
    case 404:
      return 3;
    case 409:
      return 4;
    default:
      return 1;
  }
}

gc::CampaignServer* g_server = nullptr;

void on_signal(int) {
  if (g_server != nullptr) g_server->stop();
}

std::string default_data_dir() {
  const char* v = std::getenv("GEODESIGN_DATA_DIR");
  return v != nullptr && *v != '\0' ? v : "geodesign-data";
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Adaptive geostatistical sampling designs"};
  app.require_subcommand(1);

  // ---- simulate
  auto* sim = app.add_subcommand("simulate", "Run the adaptive vs non-adaptive design experiment");
  std::string config_path;
  std::optional<int> grid_k;
  std::optional<std::size_t> n_total, replicates;
  std::vector<std::size_t> n0_values, batch_sizes;
  std::optional<double> delta;
  std::optional<std::uint64_t> seed;
  std::optional<unsigned> threads;
  bool refit = false;
  std::string out_dir = "results";
  std::string format = "all";
  sim->add_option("--config", config_path, "JSON experiment config")->check(CLI::ExistingFile);
  sim->add_option("--grid-k", grid_k, "Evaluation grid is k x k");
  sim->add_option("--n-total", n_total, "Final design size");
  sim->add_option("--n0", n0_values, "Initial design sizes")->delimiter(',');
  sim->add_option("--batch-sizes", batch_sizes, "Adaptive batch sizes")->delimiter(',');
  sim->add_option("--delta", delta, "Minimum distance");
  sim->add_option("--replicates", replicates, "Number of simulated fields");
  sim->add_option("--seed", seed, "Master seed");
  sim->add_flag("--refit", refit, "Re-estimate parameters after each batch");
  sim->add_option("--threads", threads, "Worker threads (0 = all cores)");
  sim->add_option("--out-dir", out_dir, "Output directory");
  sim->add_option("--format", format, "table, csv, json or all")->check(CLI::IsMember({"table", "csv", "json", "all"}));

  // ---- campaign
  auto* camp = app.add_subcommand("campaign", "Offline campaign management");
  camp->require_subcommand(1);
  std::string data_dir = default_data_dir();
  camp->add_option("--data-dir", data_dir, "Campaign data directory");
  std::string cid;

  auto* create = camp->add_subcommand("create", "Create a campaign from a candidate file");
  std::string candidates_path, settings_path;
  gc::Settings settings;
  std::string nugget_mode = "precision_weighted", response_mode = "counts";
  create->add_option("--id", cid, "Campaign id")->required();
  create->add_option("--candidates", candidates_path, "CSV id,x,y[,cov...]")->required()->check(CLI::ExistingFile);
  create->add_option("--settings", settings_path, "JSON settings file")->check(CLI::ExistingFile);
  auto* o_delta = create->add_option("--delta", settings.delta, "Minimum distance (coordinate units)");
  auto* o_b = create->add_option("--batch-size", settings.batch_size, "Default batch size");
  auto* o_kappa = create->add_option("--kappa", settings.kappa, "Matern smoothness");
  auto* o_nug = create->add_option("--nugget-mode", nugget_mode, "constant or precision_weighted");
  auto* o_resp = create->add_option("--response-mode", response_mode, "counts or continuous");
  auto* o_minfit = create->add_option("--min-fit-n", settings.min_fit_n, "Observations needed to fit");
  auto* o_crs = create->add_option("--crs", settings.crs, "Projected CRS label");

  auto* ingest = camp->add_subcommand("ingest", "Ingest a round of observations");
  std::string obs_path;
  ingest->add_option("--id", cid, "Campaign id")->required();
  ingest->add_option("--observations", obs_path, "CSV household_id,tested,positive or location_id,y_star")
      ->required()
      ->check(CLI::ExistingFile);

  auto* propose = camp->add_subcommand("propose", "Propose the next batch");
  std::optional<long> b;
  std::optional<double> pdelta;
  propose->add_option("--id", cid, "Campaign id")->required();
  propose->add_option("--b", b, "Batch size");
  propose->add_option("--delta", pdelta, "Minimum distance");

  auto* review = camp->add_subcommand("review", "Accept, reject or amend a proposal");
  std::string pid, action;
  std::vector<std::string> excluded;
  review->add_option("--id", cid, "Campaign id")->required();
  review->add_option("--proposal", pid, "Proposal id")->required();
  review->add_option("--action", action, "accept, reject or amend")
      ->required()
      ->check(CLI::IsMember({"accept", "reject", "amend"}));
  review->add_option("--exclude", excluded, "Infeasible ids (amend)")->delimiter(',');

  auto* surface = camp->add_subcommand("surface", "Per-candidate surface under the latest fit");
  std::string what = "pv";
  std::optional<std::string> threshold;
  surface->add_option("--id", cid, "Campaign id")->required();
  surface->add_option("--what", what, "pv, mean or exceedance")->check(CLI::IsMember({"pv", "mean", "exceedance"}));
  surface->add_option("--c", threshold, "Exceedance threshold (logit scale)");

  auto* report = camp->add_subcommand("report", "Report for one round");
  int round = 1;
  report->add_option("--id", cid, "Campaign id")->required();
  report->add_option("--round", round, "Round index (1-based)")->required();

  auto* show = camp->add_subcommand("show", "Full campaign state");
  show->add_option("--id", cid, "Campaign id")->required();

  camp->add_subcommand("list", "List campaigns");

  // ---- serve
  auto* serve = app.add_subcommand("serve", "Run the campaign HTTP server");
  std::string server_config;
  std::optional<int> port;
  std::optional<std::string> host, serve_data, ui_dir;
  serve->add_option("--config", server_config, "JSON server config")->check(CLI::ExistingFile);
  serve->add_option("--port", port, "Port");
  serve->add_option("--host", host, "Bind address");
  serve->add_option("--data-dir", serve_data, "Campaign data directory");
  serve->add_option("--ui-dir", ui_dir, "Static UI assets");

  CLI11_PARSE(app, argc, argv);

  try {
    if (*sim) {
      gd::ExperimentConfig cfg;
      if (!config_path.empty()) {
        gd::from_json(nlohmann::ordered_json::parse(read_text(config_path)), cfg);
      }
      if (grid_k) cfg.grid_k = *grid_k;
      if (n_total) cfg.n_total = *n_total;
      if (!n0_values.empty()) cfg.n0_values = n0_values;
      if (!batch_sizes.empty()) cfg.batch_sizes = batch_sizes;
      if (delta) cfg.delta = *delta;
      if (replicates) cfg.replicates = *replicates;
      if (seed) cfg.seed = *seed;
      if (refit) cfg.refit = true;
      if (threads) cfg.threads = *threads;
      const auto result = gd::run_experiment(cfg);
      const auto written = gd::emit_results(result, out_dir, gd::parse_result_format(format));
      std::cout << gd::results_table(result);
      for (const auto& p : written) std::cout << "wrote " << p.string() << '\n';
      return 0;
    }

    if (*serve) {
      auto cfg = gc::load_server_config(server_config);
      if (port) cfg.port = *port;
      if (host) cfg.host = *host;
      if (serve_data) cfg.data_dir = *serve_data;
      if (ui_dir) cfg.ui_dir = *ui_dir;
      gc::CampaignServer server(cfg);
      g_server = &server;
      std::signal(SIGINT, on_signal);
      std::signal(SIGTERM, on_signal);
      std::cerr << "geodesign serving " << cfg.data_dir << " on http://" << cfg.host << ':' << cfg.port << '\n';
      const bool ok = server.listen();
      g_server = nullptr;
      if (!ok && cfg.port != 0) {
        std::cerr << "cannot bind " << cfg.host << ':' << cfg.port << '\n';
        return 1;
      }
      return 0;
    }

    gc::CampaignService service(data_dir);
    gc::Json out;
    if (*create) {
      if (!settings_path.empty()) {
        gc::Settings base;
        gc::from_json(gc::Json::parse(read_text(settings_path)), base);
        // Explicit flags win over the file.
        if (!o_delta->count()) settings.delta = base.delta;
        if (!o_b->count()) settings.batch_size = base.batch_size;
        if (!o_kappa->count()) settings.kappa = base.kappa;
        if (!o_minfit->count()) settings.min_fit_n = base.min_fit_n;
        if (!o_crs->count()) settings.crs = base.crs;
        if (!o_nug->count()) nugget_mode = gc::to_string(base.nugget_mode);
        if (!o_resp->count()) response_mode = gc::to_string(base.response_mode);
      }
      settings.nugget_mode = gc::parse_nugget_mode(nugget_mode);
      settings.response_mode = gc::parse_response_mode(response_mode);
      gc::Json checked = settings;
      gc::from_json(checked, settings);
      out = service.create(cid, read_text(candidates_path), settings);
    } else if (*ingest) {
      out = service.ingest(cid, read_text(obs_path));
    } else if (*propose) {
      out = service.propose(cid, b, pdelta);
    } else if (*review) {
      out = service.review(cid, pid, gc::parse_review_action(action), excluded);
    } else if (*surface) {
      std::optional<double> c;
      if (threshold) c = gc::parse_threshold(*threshold);
      out = service.surface(cid, gc::parse_surface_kind(what), c);
    } else if (*report) {
      out = service.report(cid, round);
    } else if (*show) {
      out = service.get(cid);
    } else {
      out = gc::Json{{"campaigns", service.list()}};
    }
    std::cout << out.dump(2) << '\n';
    return 0;
  } catch (...) {
    return exit_code(std::current_exception());
  }
}
