#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <string>
#include <unordered_map>
#include <vector>

#include <json.hpp>

#include "geodesign/error.hpp"
#include "geodesign/inference.hpp"
#include "geodesign/serialization.hpp"
#include "geodesign/survey.hpp"

namespace geodesign::campaign {

using Json = nlohmann::ordered_json;

class NotFound : public Error {
 public:
  using Error::Error;
};

/// Request conflicts with current state (duplicate id, open proposal, ...).
class Conflict : public Error {
 public:
  using Error::Error;
};

struct RowError {
  std::size_t line = 0;
  std::string id;
  std::string message;
};

/// Observation file rejected; carries every offending row.
class IngestError : public InvalidArgument {
 public:
  explicit IngestError(std::vector<RowError> errors)
      : InvalidArgument("observation file rejected: " + std::to_string(errors.size()) + " bad row(s)"),
        errors_(std::move(errors)) {}
  [[nodiscard]] const std::vector<RowError>& errors() const { return errors_; }

 private:
  std::vector<RowError> errors_;
};

enum class ResponseMode { kCounts, kContinuous };

struct Settings {
  double delta = 0.15;
  std::size_t batch_size = 50;
  double kappa = 1.5;
  NuggetMode nugget_mode = NuggetMode::kPrecisionWeighted;
  ResponseMode response_mode = ResponseMode::kCounts;
  std::size_t min_fit_n = 20;
  /// Label of the projected coordinate system. Coordinates are treated as
  /// planar and never reprojected; delta is in the same units.
  std::string crs = "unspecified";
};

struct Candidate {
  std::string id;
  Location location;
  std::vector<double> covariates;
};

/// One household's aggregated observation in a round.
struct ObservationRow {
  std::string id;
  long tested = 0;
  long positives = 0;
  double y_star = 0.0;  // continuous mode only
};

/// Accumulated data at one candidate across all rounds.
struct Site {
  std::size_t candidate = 0;
  long tested = 0;
  long positives = 0;
  double y_star = 0.0;
};

struct PvSummary {
  double min = 0.0;
  double max = 0.0;
  double mean = 0.0;
};

struct RoundRecord {
  int round = 0;
  std::vector<ObservationRow> rows;
  std::size_t locations_used = 0;
  std::optional<FitResult> fit;  // in effect after this round
  bool refit_succeeded = false;
  std::vector<std::string> warnings;
  std::optional<PvSummary> pv;
};

enum class ProposalStatus { kOpen, kAccepted, kRejected, kAmended };

struct Proposal {
  std::string id;
  int round = 0;  // round whose fit ranked the candidates
  std::size_t b = 0;
  double delta = 0.0;
  std::vector<std::string> ids;
  std::vector<double> pv;
  bool exhausted = false;
  ProposalStatus status = ProposalStatus::kOpen;
  std::vector<std::string> excluded;
  std::vector<std::string> backfill;
  std::vector<double> backfill_pv;
  int batch_index = -1;
};

struct CampaignState {
  std::string id;
  Settings settings;
  std::vector<Candidate> candidates;
  std::vector<std::size_t> design;  // candidate indices, in order of entry
  std::vector<int> batch_index;
  std::vector<Site> sites;  // in order of first observation
  std::vector<RoundRecord> rounds;
  std::vector<Proposal> proposals;
  std::vector<std::string> infeasible;  // sorted
  std::size_t version = 0;

  // Derived lookups, rebuilt on load.
  std::unordered_map<std::string, std::size_t> index;

  [[nodiscard]] std::optional<std::size_t> find(const std::string& candidate_id) const {
    const auto it = index.find(candidate_id);
    if (it == index.end()) return std::nullopt;
    return it->second;
  }
  [[nodiscard]] std::size_t at(const std::string& candidate_id) const {
    const auto i = find(candidate_id);
    if (!i) throw NotFound("unknown candidate id '" + candidate_id + "'");
    return *i;
  }
  [[nodiscard]] bool in_design(std::size_t candidate) const {
    return std::find(design.begin(), design.end(), candidate) != design.end();
  }
  [[nodiscard]] bool is_infeasible(const std::string& candidate_id) const {
    return std::binary_search(infeasible.begin(), infeasible.end(), candidate_id);
  }
  [[nodiscard]] const Proposal* open_proposal() const {
    for (const auto& p : proposals) {
      if (p.status == ProposalStatus::kOpen) return &p;
    }
    return nullptr;
  }
  [[nodiscard]] const RoundRecord* latest_fitted_round() const {
    for (auto it = rounds.rbegin(); it != rounds.rend(); ++it) {
      if (it->fit) return &*it;
    }
    return nullptr;
  }
  [[nodiscard]] int last_batch() const {
    return batch_index.empty() ? -1 : *std::max_element(batch_index.begin(), batch_index.end());
  }
  void rebuild_index() {
    index.clear();
    for (std::size_t i = 0; i < candidates.size(); ++i) index.emplace(candidates[i].id, i);
  }
};

// ---- JSON -----------------------------------------------------------------

inline std::string to_string(NuggetMode m) {
  return m == NuggetMode::kConstant ? "constant" : "precision_weighted";
}
inline NuggetMode parse_nugget_mode(const std::string& s) {
  if (s == "constant") return NuggetMode::kConstant;
  if (s == "precision_weighted") return NuggetMode::kPrecisionWeighted;
  throw InvalidArgument("nugget_mode must be 'constant' or 'precision_weighted'");
}
inline std::string to_string(ResponseMode m) { return m == ResponseMode::kCounts ? "counts" : "continuous"; }
inline ResponseMode parse_response_mode(const std::string& s) {
  if (s == "counts") return ResponseMode::kCounts;
  if (s == "continuous") return ResponseMode::kContinuous;
  throw InvalidArgument("response_mode must be 'counts' or 'continuous'");
}
inline std::string to_string(ProposalStatus s) {
  switch (s) {
    case ProposalStatus::kOpen:
      return "open";
    case ProposalStatus::kAccepted:
      return "accepted";
    case ProposalStatus::kRejected:
      return "rejected";
    case ProposalStatus::kAmended:
      return "amended";
  }
  return "open";
}
inline ProposalStatus parse_proposal_status(const std::string& s) {
  if (s == "open") return ProposalStatus::kOpen;
  if (s == "accepted") return ProposalStatus::kAccepted;
  if (s == "rejected") return ProposalStatus::kRejected;
  if (s == "amended") return ProposalStatus::kAmended;
  throw InvalidArgument("unknown proposal status '" + s + "'");
}

inline void to_json(Json& j, const Settings& s) {
  j = Json{{"delta", s.delta},
           {"batch_size", s.batch_size},
           {"kappa", s.kappa},
           {"nugget_mode", to_string(s.nugget_mode)},
           {"response_mode", to_string(s.response_mode)},
           {"min_fit_n", s.min_fit_n},
           {"crs", s.crs}};
}

/// Absent fields keep their defaults; values are range checked.
inline void validate(const Settings& s) {
  if (!(s.delta >= 0.0) || !std::isfinite(s.delta)) throw InvalidArgument("settings.delta must be non-negative");
  if (s.batch_size < 1) throw InvalidArgument("settings.batch_size must be at least 1");
  if (!(s.kappa > 0.0) || !std::isfinite(s.kappa)) throw InvalidArgument("settings.kappa must be positive");
}
inline void from_json(const Json& j, Settings& s) {
  s.delta = j.value("delta", s.delta);
  s.batch_size = j.value("batch_size", s.batch_size);
  s.kappa = j.value("kappa", s.kappa);
  if (j.contains("nugget_mode")) s.nugget_mode = parse_nugget_mode(j.at("nugget_mode").get<std::string>());
  if (j.contains("response_mode")) s.response_mode = parse_response_mode(j.at("response_mode").get<std::string>());
  s.min_fit_n = j.value("min_fit_n", s.min_fit_n);
  s.crs = j.value("crs", s.crs);
  validate(s);
}

inline void to_json(Json& j, const Candidate& c) {
  j = Json{{"id", c.id}, {"x", c.location.x}, {"y", c.location.y}, {"covariates", c.covariates}};
}
inline void from_json(const Json& j, Candidate& c) {
  c.id = j.at("id").get<std::string>();
  c.location = {j.at("x").get<double>(), j.at("y").get<double>()};
  c.covariates = j.at("covariates").get<std::vector<double>>();
}

inline void to_json(Json& j, const ObservationRow& r) {
  j = Json{{"id", r.id}, {"tested", r.tested}, {"positives", r.positives}, {"y_star", r.y_star}};
}
inline void from_json(const Json& j, ObservationRow& r) {
  r.id = j.at("id").get<std::string>();
  r.tested = j.at("tested").get<long>();
  r.positives = j.at("positives").get<long>();
  r.y_star = j.at("y_star").get<double>();
}

inline void to_json(Json& j, const Site& s) {
  j = Json{{"candidate", s.candidate}, {"tested", s.tested}, {"positives", s.positives}, {"y_star", s.y_star}};
}
inline void from_json(const Json& j, Site& s) {
  s.candidate = j.at("candidate").get<std::size_t>();
  s.tested = j.at("tested").get<long>();
  s.positives = j.at("positives").get<long>();
  s.y_star = j.at("y_star").get<double>();
}

inline void to_json(Json& j, const PvSummary& s) { j = Json{{"min", s.min}, {"max", s.max}, {"mean", s.mean}}; }
inline void from_json(const Json& j, PvSummary& s) {
  s.min = j.at("min").get<double>();
  s.max = j.at("max").get<double>();
  s.mean = j.at("mean").get<double>();
}

inline void to_json(Json& j, const RoundRecord& r) {
  j = Json{{"round", r.round},
           {"rows", r.rows},
           {"locations_used", r.locations_used},
           {"fit", r.fit ? Json(*r.fit) : Json(nullptr)},
           {"refit_succeeded", r.refit_succeeded},
           {"warnings", r.warnings},
           {"pv", r.pv ? Json(*r.pv) : Json(nullptr)}};
}
inline void from_json(const Json& j, RoundRecord& r) {
  r.round = j.at("round").get<int>();
  r.rows = j.at("rows").get<std::vector<ObservationRow>>();
  r.locations_used = j.at("locations_used").get<std::size_t>();
  r.fit.reset();
  if (!j.at("fit").is_null()) r.fit = j.at("fit").get<FitResult>();
  r.refit_succeeded = j.at("refit_succeeded").get<bool>();
  r.warnings = j.at("warnings").get<std::vector<std::string>>();
  r.pv.reset();
  if (!j.at("pv").is_null()) r.pv = j.at("pv").get<PvSummary>();
}

inline void to_json(Json& j, const Proposal& p) {
  j = Json{{"id", p.id},
           {"round", p.round},
           {"b", p.b},
           {"delta", p.delta},
           {"ids", p.ids},
           {"pv", p.pv},
           {"exhausted", p.exhausted},
           {"status", to_string(p.status)},
           {"excluded", p.excluded},
           {"backfill", p.backfill},
           {"backfill_pv", p.backfill_pv},
           {"batch_index", p.batch_index}};
}
inline void from_json(const Json& j, Proposal& p) {
  p.id = j.at("id").get<std::string>();
  p.round = j.at("round").get<int>();
  p.b = j.at("b").get<std::size_t>();
  p.delta = j.at("delta").get<double>();
  p.ids = j.at("ids").get<std::vector<std::string>>();
  p.pv = j.at("pv").get<std::vector<double>>();
  p.exhausted = j.at("exhausted").get<bool>();
  p.status = parse_proposal_status(j.at("status").get<std::string>());
  p.excluded = j.at("excluded").get<std::vector<std::string>>();
  p.backfill = j.at("backfill").get<std::vector<std::string>>();
  p.backfill_pv = j.at("backfill_pv").get<std::vector<double>>();
  p.batch_index = j.at("batch_index").get<int>();
}

inline void to_json(Json& j, const CampaignState& s) {
  Json design = Json::array();
  for (std::size_t k = 0; k < s.design.size(); ++k) {
    design.push_back(Json{{"id", s.candidates[s.design[k]].id}, {"batch_index", s.batch_index[k]}});
  }
  j = Json{{"id", s.id},
           {"version", s.version},
           {"settings", s.settings},
           {"candidates", s.candidates},
           {"design", design},
           {"sites", s.sites},
           {"rounds", s.rounds},
           {"proposals", s.proposals},
           {"infeasible", s.infeasible}};
}
inline void from_json(const Json& j, CampaignState& s) {
  s.id = j.at("id").get<std::string>();
  s.version = j.at("version").get<std::size_t>();
  from_json(j.at("settings"), s.settings);
  s.candidates = j.at("candidates").get<std::vector<Candidate>>();
  s.rebuild_index();
  s.design.clear();
  s.batch_index.clear();
  for (const auto& d : j.at("design")) {
    s.design.push_back(s.at(d.at("id").get<std::string>()));
    s.batch_index.push_back(d.at("batch_index").get<int>());
  }
  s.sites = j.at("sites").get<std::vector<Site>>();
  s.rounds = j.at("rounds").get<std::vector<RoundRecord>>();
  s.proposals = j.at("proposals").get<std::vector<Proposal>>();
  s.infeasible = j.at("infeasible").get<std::vector<std::string>>();
}

// ---- events ---------------------------------------------------------------

inline Json created_event(const std::string& id, const Settings& settings, const std::vector<Candidate>& candidates) {
  return Json{{"type", "created"}, {"id", id}, {"settings", settings}, {"candidates", candidates}};
}
inline Json round_event(const RoundRecord& round) { return Json{{"type", "round_ingested"}, {"round", round}}; }
inline Json proposal_event(const Proposal& p) { return Json{{"type", "proposal_created"}, {"proposal", p}}; }
inline Json review_event(const std::string& proposal_id, ProposalStatus outcome,
                         const std::vector<std::string>& excluded, const std::vector<std::string>& backfill,
                         const std::vector<double>& backfill_pv, int batch_index) {
  return Json{{"type", "proposal_reviewed"}, {"proposal_id", proposal_id}, {"status", to_string(outcome)},
              {"excluded", excluded},        {"backfill", backfill},       {"backfill_pv", backfill_pv},
              {"batch_index", batch_index}};
}

namespace detail {

inline void add_to_design(CampaignState& s, std::size_t candidate, int batch) {
  if (s.in_design(candidate)) return;
  s.design.push_back(candidate);
  s.batch_index.push_back(batch);
}

}  // namespace detail

/// Pure state transition. Events carry every computed outcome (fits,
/// proposals, backfills), so folding a log reproduces the state exactly.
inline CampaignState apply_event(CampaignState s, const Json& event) {
  const auto type = event.at("type").get<std::string>();
  if (type == "created") {
    s = CampaignState{};
    s.id = event.at("id").get<std::string>();
    from_json(event.at("settings"), s.settings);
    s.candidates = event.at("candidates").get<std::vector<Candidate>>();
    s.rebuild_index();
  } else if (type == "round_ingested") {
    auto round = event.at("round").get<RoundRecord>();
    const int batch = std::max(0, s.last_batch());
    for (const auto& row : round.rows) {
      const std::size_t c = s.at(row.id);
      auto it = std::find_if(s.sites.begin(), s.sites.end(), [&](const Site& site) { return site.candidate == c; });
      if (it == s.sites.end()) {
        s.sites.push_back({c, row.tested, row.positives, row.y_star});
      } else {
        it->tested += row.tested;
        it->positives += row.positives;
        it->y_star = row.y_star;
      }
      detail::add_to_design(s, c, batch);
    }
    s.rounds.push_back(std::move(round));
  } else if (type == "proposal_created") {
    s.proposals.push_back(event.at("proposal").get<Proposal>());
  } else if (type == "proposal_reviewed") {
    const auto pid = event.at("proposal_id").get<std::string>();
    auto it = std::find_if(s.proposals.begin(), s.proposals.end(), [&](const Proposal& p) { return p.id == pid; });
    if (it == s.proposals.end()) throw NotFound("unknown proposal '" + pid + "'");
    it->status = parse_proposal_status(event.at("status").get<std::string>());
    it->excluded = event.at("excluded").get<std::vector<std::string>>();
    it->backfill = event.at("backfill").get<std::vector<std::string>>();
    it->backfill_pv = event.at("backfill_pv").get<std::vector<double>>();
    it->batch_index = event.at("batch_index").get<int>();
    if (it->status != ProposalStatus::kRejected) {
      for (const auto& id : it->ids) {
        if (std::find(it->excluded.begin(), it->excluded.end(), id) == it->excluded.end()) {
          detail::add_to_design(s, s.at(id), it->batch_index);
        }
      }
      for (const auto& id : it->backfill) detail::add_to_design(s, s.at(id), it->batch_index);
      for (const auto& id : it->excluded) s.infeasible.push_back(id);
      std::sort(s.infeasible.begin(), s.infeasible.end());
      s.infeasible.erase(std::unique(s.infeasible.begin(), s.infeasible.end()), s.infeasible.end());
    }
  } else {
    throw InvalidArgument("unknown campaign event type '" + type + "'");
  }
  ++s.version;
  return s;
}

inline CampaignState replay(const std::vector<Json>& events) {
  CampaignState s;
  for (const auto& e : events) s = apply_event(std::move(s), e);
  return s;
}

}  // namespace geodesign::campaign
