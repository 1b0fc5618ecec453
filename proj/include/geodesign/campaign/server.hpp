#pragma once

#include <chrono>
#include <cstdlib>
#include <exception>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

// Before httplib: glibc's resolv.h defines _res, which collides with Eigen.
#include "geodesign/campaign/service.hpp"

#include <httplib.h>

namespace geodesign::campaign {

struct ServerConfig {
  std::string host = "127.0.0.1";
  int port = 8080;
  std::string data_dir = "geodesign-data";
  int timeout_ms = 10000;
  std::string ui_dir;  // static assets mounted at / when set
};

inline void from_json(const Json& j, ServerConfig& c) {
  for (const auto& [key, _] : j.items()) {
    if (key != "host" && key != "port" && key != "data_dir" && key != "timeout_ms" && key != "ui_dir") {
      throw InvalidArgument("unknown server config key '" + key + "'");
    }
  }
  c.host = j.value("host", c.host);
  c.port = j.value("port", c.port);
  c.data_dir = j.value("data_dir", c.data_dir);
  c.timeout_ms = j.value("timeout_ms", c.timeout_ms);
  c.ui_dir = j.value("ui_dir", c.ui_dir);
}

/// JSON file (optional) then GEODESIGN_* environment overrides.
inline ServerConfig load_server_config(const std::string& path = {}) {
  ServerConfig c;
  if (!path.empty()) {
    std::ifstream in(path);
    if (!in) throw InvalidArgument("cannot read config " + path);
    try {
      from_json(Json::parse(in), c);
    } catch (const nlohmann::json::exception& e) {
      throw InvalidArgument("config " + path + ": " + e.what());
    }
  }
  auto env = [](const char* name) -> const char* {
    const char* v = std::getenv(name);
    return v != nullptr && *v != '\0' ? v : nullptr;
  };
  auto env_int = [&](const char* name, int& out) {
    if (const char* v = env(name)) {
      const auto parsed = parse_integer(v);
      if (!parsed) throw InvalidArgument(std::string(name) + " must be an integer");
      out = static_cast<int>(*parsed);
    }
  };
  if (const char* v = env("GEODESIGN_HOST")) c.host = v;
  env_int("GEODESIGN_PORT", c.port);
  if (const char* v = env("GEODESIGN_DATA_DIR")) c.data_dir = v;
  env_int("GEODESIGN_TIMEOUT_MS", c.timeout_ms);
  if (const char* v = env("GEODESIGN_UI_DIR")) c.ui_dir = v;
  if (c.port < 0 || c.port > 65535) throw InvalidArgument("port out of range");
  if (c.timeout_ms < 1) throw InvalidArgument("timeout_ms must be positive");
  return c;
}

/// Maps the active exception to an HTTP status and JSON error body.
inline std::pair<int, Json> error_response(std::exception_ptr ep) {
  try {
    std::rethrow_exception(ep);
  } catch (const IngestError& e) {
    Json rows = Json::array();
    for (const auto& r : e.errors()) rows.push_back(Json{{"line", r.line}, {"id", r.id}, {"message", r.message}});
    return {422, Json{{"error", e.what()}, {"rows", rows}}};
  } catch (const NotFound& e) {
    return {404, Json{{"error", e.what()}}};
  } catch (const Conflict& e) {
    return {409, Json{{"error", e.what()}}};
  } catch (const InvalidArgument& e) {
    return {400, Json{{"error", e.what()}}};
  } catch (const nlohmann::json::exception& e) {
    return {400, Json{{"error", std::string("bad JSON: ") + e.what()}}};
  } catch (const SingularCovariance& e) {
    return {422, Json{{"error", e.what()}}};
  } catch (const std::exception& e) {
    return {500, Json{{"error", e.what()}}};
  } catch (...) {
    return {500, Json{{"error", "unknown error"}}};
  }
}

namespace detail {

inline void send(httplib::Response& res, int status, const Json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

inline Json parse_body(const httplib::Request& req) {
  if (req.body.empty()) return Json::object();
  return Json::parse(req.body);
}

inline bool is_csv(const httplib::Request& req) {
  const auto ct = req.get_header_value("Content-Type");
  return ct.rfind("text/csv", 0) == 0 || ct.rfind("text/plain", 0) == 0;
}

/// Body rows as CSV text: objects become columns in first-seen key order.
inline std::string rows_to_csv(const Json& rows) {
  if (!rows.is_array() || rows.empty()) throw InvalidArgument("observations must be a non-empty array");
  std::vector<std::string> cols;
  for (const auto& [k, _] : rows.front().items()) cols.push_back(k);
  std::ostringstream out;
  out.precision(17);
  for (std::size_t i = 0; i < cols.size(); ++i) out << (i ? "," : "") << cols[i];
  out << '\n';
  for (const auto& r : rows) {
    for (std::size_t i = 0; i < cols.size(); ++i) {
      if (i) out << ',';
      const auto& v = r.at(cols[i]);
      if (v.is_string()) {
        std::string s = v.get<std::string>();
        std::string q = "\"";
        for (char ch : s) q += ch == '"' ? std::string("\"\"") : std::string(1, ch);
        out << q << '"';
      } else if (v.is_number_integer()) {
        out << v.get<long>();
      } else if (v.is_number()) {
        out << v.get<double>();
      } else {
        throw InvalidArgument("observation field '" + cols[i] + "' must be a string or number");
      }
    }
    out << '\n';
  }
  return out.str();
}

/// Accepts text/csv, multipart (file field `field`), or JSON with either a
/// `csv` string or a `rows` array.
inline std::string csv_payload(const httplib::Request& req, const std::string& field, const Json* json = nullptr) {
  if (req.is_multipart_form_data()) {
    if (!req.has_file(field)) throw InvalidArgument("multipart body needs a '" + field + "' file");
    return req.get_file_value(field).content;
  }
  if (is_csv(req)) return req.body;
  const Json body = json != nullptr ? *json : parse_body(req);
  if (body.contains("csv")) return body.at("csv").get<std::string>();
  if (body.contains(field)) return rows_to_csv(body.at(field));
  if (body.contains("rows")) return rows_to_csv(body.at("rows"));
  throw InvalidArgument("body needs '" + field + "' rows or a 'csv' string");
}

}  // namespace detail

class CampaignServer {
 public:
  explicit CampaignServer(ServerConfig config)
      : config_(std::move(config)), service_(config_.data_dir), http_(std::make_unique<httplib::Server>()) {
    routes();
  }

  [[nodiscard]] CampaignService& service() { return service_; }
  [[nodiscard]] httplib::Server& http() { return *http_; }
  [[nodiscard]] const ServerConfig& config() const { return config_; }

  /// Blocks until stop(). Returns false if the socket could not be bound.
  bool listen() { return http_->listen(config_.host, config_.port); }

  /// Binds an ephemeral port (for tests); serve with listen_after_bind().
  int bind_any() { return http_->bind_to_any_port(config_.host); }
  bool listen_after_bind() { return http_->listen_after_bind(); }
  void stop() { http_->stop(); }

 private:
  using Handler = std::function<std::pair<int, Json>(const httplib::Request&)>;

  static httplib::Server::Handler wrap(Handler h) {
    return [h = std::move(h)](const httplib::Request& req, httplib::Response& res) {
      std::pair<int, Json> r;
      try {
        r = h(req);
      } catch (...) {
        r = error_response(std::current_exception());
      }
      detail::send(res, r.first, r.second);
    };
  }

  void routes() {
    auto& s = *http_;
    const std::string id = "([A-Za-z0-9_-]+)";

    s.Get("/campaigns", wrap([this](const httplib::Request&) {
            Json ids = service_.list();
            return std::pair{200, Json{{"campaigns", ids}}};
          }));

    s.Post("/campaigns", wrap([this](const httplib::Request& req) {
             Json body;
             std::string csv;
             Settings settings;
             std::string cid;
             if (req.is_multipart_form_data()) {
               cid = req.get_file_value("id").content;
               if (req.has_file("settings")) from_json(Json::parse(req.get_file_value("settings").content), settings);
               csv = detail::csv_payload(req, "candidates");
             } else {
               body = detail::parse_body(req);
               cid = body.at("id").get<std::string>();
               if (body.contains("settings")) from_json(body.at("settings"), settings);
               if (body.contains("candidates_csv")) {
                 csv = body.at("candidates_csv").get<std::string>();
               } else {
                 csv = detail::csv_payload(req, "candidates", &body);
               }
             }
             return std::pair{201, service_.create(cid, csv, settings)};
           }));

    s.Get("/campaigns/" + id, wrap([this](const httplib::Request& req) {
            return std::pair{200, service_.get(req.matches[1])};
          }));

    s.Post("/campaigns/" + id + "/rounds", wrap([this](const httplib::Request& req) {
             const std::string cid = req.matches[1];
             std::string csv = detail::csv_payload(req, "observations");
             auto job = jobs_.run(
                 [this, cid, csv = std::move(csv)]() -> std::pair<int, Json> {
                   try {
                     return {201, service_.ingest(cid, csv)};
                   } catch (...) {
                     return error_response(std::current_exception());
                   }
                 },
                 std::chrono::milliseconds(config_.timeout_ms));
             if (job.status == JobRunner::Status::kRunning) {
               return std::pair{202, job_view(cid, job)};
             }
             return std::pair{job.http_status, job.result};
           }));

    s.Get("/campaigns/" + id + "/jobs/([A-Za-z0-9_-]+)", wrap([this](const httplib::Request& req) {
            const std::string cid = req.matches[1];
            const auto job = jobs_.get(req.matches[2]);
            if (!job) throw NotFound("unknown job '" + std::string(req.matches[2]) + "'");
            return std::pair{200, job_view(cid, *job)};
          }));

    s.Post("/campaigns/" + id + "/proposals", wrap([this](const httplib::Request& req) {
             const Json body = detail::parse_body(req);
             std::optional<long> b;
             std::optional<double> delta;
             if (body.contains("b")) {
               if (!body.at("b").is_number_integer()) throw InvalidArgument("b must be an integer");
               b = body.at("b").get<long>();
             }
             if (body.contains("delta")) delta = body.at("delta").get<double>();
             return std::pair{201, service_.propose(req.matches[1], b, delta)};
           }));

    s.Post("/campaigns/" + id + "/proposals/([A-Za-z0-9_-]+)/review", wrap([this](const httplib::Request& req) {
             const Json body = detail::parse_body(req);
             const auto action = parse_review_action(body.at("action").get<std::string>());
             std::vector<std::string> excluded;
             if (body.contains("excluded")) excluded = body.at("excluded").get<std::vector<std::string>>();
             return std::pair{200, service_.review(req.matches[1], req.matches[2], action, excluded)};
           }));

    s.Get("/campaigns/" + id + "/surface", wrap([this](const httplib::Request& req) {
            const auto kind = parse_surface_kind(req.has_param("what") ? req.get_param_value("what") : "pv");
            std::optional<double> c;
            if (req.has_param("c")) c = parse_threshold(req.get_param_value("c"));
            return std::pair{200, service_.surface(req.matches[1], kind, c)};
          }));

    s.Get("/campaigns/" + id + R"(/report/(\d+))", wrap([this](const httplib::Request& req) {
            const auto round = parse_integer(std::string(req.matches[2]));
            if (!round || *round > 1000000) throw InvalidArgument("bad round index");
            return std::pair{200, service_.report(req.matches[1], static_cast<int>(*round))};
          }));

    if (!config_.ui_dir.empty() && !s.set_mount_point("/", config_.ui_dir)) {
      throw InvalidArgument("ui_dir " + config_.ui_dir + " is not a directory");
    }
  }

  static Json job_view(const std::string& cid, const JobRunner::Job& job) {
    Json out{{"job_id", job.id},
             {"status", JobRunner::to_string(job.status)},
             {"poll", "/campaigns/" + cid + "/jobs/" + job.id}};
    if (job.status != JobRunner::Status::kRunning) {
      out["http_status"] = job.http_status;
      out["result"] = job.result;
    }
    return out;
  }

  ServerConfig config_;
  CampaignService service_;
  JobRunner jobs_;
  std::unique_ptr<httplib::Server> http_;
};

}  // namespace geodesign::campaign
