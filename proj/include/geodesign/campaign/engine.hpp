#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <regex>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "geodesign/campaign/csv.hpp"
#include "geodesign/campaign/state.hpp"
#include "geodesign/designs.hpp"
#include "geodesign/inference.hpp"
#include "geodesign/prediction.hpp"

// Pure campaign logic: every mutation is computed here as an event from the
// current state, and every read is a function of the state alone.
namespace geodesign::campaign {

inline void validate_campaign_id(const std::string& id) {
  static const std::regex pattern("[A-Za-z0-9_-]{1,64}");
  if (!std::regex_match(id, pattern)) {
    throw InvalidArgument("campaign id must be 1-64 characters from [A-Za-z0-9_-]");
  }
}

/// Candidate file: header `id,x,y[,cov...]`.
inline std::vector<Candidate> parse_candidates(std::string_view text) {
  const auto table = parse_csv(text);
  const auto& h = table.header;
  if (h.size() < 3 || h[0] != "id" || h[1] != "x" || h[2] != "y") {
    throw InvalidArgument("candidate file header must start with id,x,y");
  }
  if (table.rows.empty()) throw InvalidArgument("candidate file has no rows");
  std::vector<Candidate> out;
  out.reserve(table.rows.size());
  std::set<std::string> ids;
  for (std::size_t r = 0; r < table.rows.size(); ++r) {
    const auto& row = table.rows[r];
    const auto line = std::to_string(table.line_numbers[r]);
    Candidate c;
    c.id = row[0];
    if (c.id.empty()) throw InvalidArgument("candidate file line " + line + ": empty id");
    if (!ids.insert(c.id).second) throw InvalidArgument("duplicate candidate id '" + c.id + "'");
    const auto x = parse_real(row[1]);
    const auto y = parse_real(row[2]);
    if (!x || !y) throw InvalidArgument("candidate file line " + line + ": bad coordinates for '" + c.id + "'");
    c.location = {*x, *y};
    for (std::size_t k = 3; k < row.size(); ++k) {
      const auto v = parse_real(row[k]);
      if (!v) throw InvalidArgument("candidate file line " + line + ": bad covariate '" + h[k] + "'");
      c.covariates.push_back(*v);
    }
    out.push_back(std::move(c));
  }
  std::vector<std::size_t> order(out.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
    const auto& p = out[a].location;
    const auto& q = out[b].location;
    return p.x < q.x || (p.x == q.x && p.y < q.y);
  });
  for (std::size_t k = 1; k < order.size(); ++k) {
    if (out[order[k]].location == out[order[k - 1]].location) {
      throw InvalidArgument("candidates '" + out[order[k - 1]].id + "' and '" + out[order[k]].id +
                            "' share coordinates");
    }
  }
  return out;
}

/// Observation file, aggregated per location and sorted by id. Counts mode
/// sums repeated rows (one row per individual is fine); extra columns are
/// ignored. Every bad row is collected before throwing.
inline std::vector<ObservationRow> parse_observations(std::string_view text, const CampaignState& s) {
  const auto table = parse_csv(text);
  const bool counts = s.settings.response_mode == ResponseMode::kCounts;
  std::vector<RowError> errors;
  std::map<std::string, ObservationRow> agg;
  std::map<std::string, std::size_t> first_line;

  if (counts) {
    const auto ci = table.column("household_id");
    const auto cn = table.column("tested");
    const auto cy = table.column("positive");
    if (!ci || !cn || !cy) throw InvalidArgument("observation file needs columns household_id,tested,positive");
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& row = table.rows[r];
      const std::size_t line = table.line_numbers[r];
      const std::string& id = row[*ci];
      const auto n = parse_integer(row[*cn]);
      const auto y = parse_integer(row[*cy]);
      if (!s.find(id)) {
        errors.push_back({line, id, "unknown location id"});
      } else if (!n || !y) {
        errors.push_back({line, id, "tested and positive must be integers"});
      } else if (*n == 0) {
        errors.push_back({line, id, "no eligible individuals (tested = 0)"});
      } else if (*n < 0 || *y < 0 || *y > *n) {
        errors.push_back({line, id, "counts must satisfy 0 <= positive <= tested"});
      } else {
        auto& a = agg[id];
        a.id = id;
        a.tested += *n;
        a.positives += *y;
      }
    }
  } else {
    const auto ci = table.column("location_id");
    const auto cv = table.column("y_star");
    if (!ci || !cv) throw InvalidArgument("observation file needs columns location_id,y_star");
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
      const auto& row = table.rows[r];
      const std::size_t line = table.line_numbers[r];
      const std::string& id = row[*ci];
      const auto v = parse_real(row[*cv]);
      if (!s.find(id)) {
        errors.push_back({line, id, "unknown location id"});
      } else if (!v) {
        errors.push_back({line, id, "y_star must be a finite number"});
      } else if (!first_line.emplace(id, line).second) {
        errors.push_back({line, id, "location repeated in file"});
      } else {
        agg[id] = ObservationRow{id, 0, 0, *v};
      }
    }
  }
  if (!errors.empty()) throw IngestError(std::move(errors));
  if (agg.empty()) throw InvalidArgument("observation file has no rows");
  std::vector<ObservationRow> out;
  out.reserve(agg.size());
  for (auto& [id, row] : agg) out.push_back(std::move(row));
  return out;
}

// ---- derived quantities ---------------------------------------------------

inline std::vector<Location> candidate_locations(const CampaignState& s) {
  std::vector<Location> out;
  out.reserve(s.candidates.size());
  for (const auto& c : s.candidates) out.push_back(c.location);
  return out;
}

inline std::vector<std::vector<double>> candidate_covariates(const CampaignState& s) {
  if (s.candidates.empty() || s.candidates.front().covariates.empty()) return {};
  std::vector<std::vector<double>> out;
  out.reserve(s.candidates.size());
  for (const auto& c : s.candidates) out.push_back(c.covariates);
  return out;
}

/// Accumulated data in order of first observation.
inline SurveyData survey_data(const CampaignState& s) {
  std::vector<Location> locs;
  std::vector<std::vector<double>> covs;
  const bool has_covs = !s.candidates.empty() && !s.candidates.front().covariates.empty();
  for (const auto& site : s.sites) {
    locs.push_back(s.candidates[site.candidate].location);
    if (has_covs) covs.push_back(s.candidates[site.candidate].covariates);
  }
  if (s.settings.response_mode == ResponseMode::kCounts) {
    std::vector<Count> counts;
    for (const auto& site : s.sites) counts.push_back({site.positives, site.tested});
    return SurveyData::from_counts(std::move(locs), std::move(counts), std::move(covs));
  }
  std::vector<double> y;
  for (const auto& site : s.sites) y.push_back(site.y_star);
  return SurveyData::continuous(std::move(locs), std::move(y), std::move(covs));
}

/// Nugget of each design point: precision weighted by household count for
/// observed points (when configured), tau2 for points not yet observed.
inline std::vector<double> design_nuggets(const CampaignState& s, double tau2) {
  std::vector<double> out(s.design.size(), tau2);
  if (s.settings.nugget_mode != NuggetMode::kPrecisionWeighted ||
      s.settings.response_mode != ResponseMode::kCounts || s.sites.empty()) {
    return out;
  }
  double mean_n = 0.0;
  for (const auto& site : s.sites) mean_n += static_cast<double>(site.tested);
  mean_n /= static_cast<double>(s.sites.size());
  std::map<std::size_t, long> tested;
  for (const auto& site : s.sites) tested[site.candidate] = site.tested;
  for (std::size_t k = 0; k < s.design.size(); ++k) {
    const auto it = tested.find(s.design[k]);
    if (it != tested.end()) out[k] = tau2 * mean_n / static_cast<double>(it->second);
  }
  return out;
}

inline std::vector<Location> design_locations(const CampaignState& s) {
  std::vector<Location> out;
  for (auto c : s.design) out.push_back(s.candidates[c].location);
  return out;
}

/// PV at every candidate for the current design under `model`.
inline std::vector<double> candidate_pv(const CampaignState& s, const ModelSpec& model) {
  return prediction_variance(model.matern, design_locations(s), design_nuggets(s, model.tau2),
                             candidate_locations(s));
}

inline PvSummary summarize(const std::vector<double>& v) {
  PvSummary out;
  if (v.empty()) return out;
  const auto [lo, hi] = std::minmax_element(v.begin(), v.end());
  out.min = *lo;
  out.max = *hi;
  out.mean = std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
  return out;
}

inline const FitResult& current_fit(const CampaignState& s) {
  const auto* r = s.latest_fitted_round();
  if (r == nullptr) throw Conflict("campaign '" + s.id + "' has no fitted round yet");
  return *r->fit;
}

/// Adaptive-algorithm state for the campaign: design = current design plus
/// `extra`, available set = candidates outside it that are not infeasible
/// or listed in `exclude`.
inline AdaptiveState adaptive_state(const CampaignState& s, const ModelSpec& model,
                                    const std::vector<std::size_t>& extra = {},
                                    const std::vector<std::size_t>& exclude = {}) {
  Design d;
  auto nug = design_nuggets(s, model.tau2);
  for (std::size_t k = 0; k < s.design.size(); ++k) {
    d.points.push_back(s.candidates[s.design[k]].location);
    d.candidate_index.push_back(s.design[k]);
    d.batch_index.push_back(s.batch_index[k]);
  }
  for (auto c : extra) {
    d.points.push_back(s.candidates[c].location);
    d.candidate_index.push_back(c);
    d.batch_index.push_back(s.last_batch() + 1);
    nug.push_back(model.tau2);
  }
  auto state = make_adaptive_state(std::make_shared<const std::vector<Location>>(candidate_locations(s)),
                                   std::move(d), model);
  std::vector<char> blocked(s.candidates.size(), 0);
  for (const auto& id : s.infeasible) blocked[s.at(id)] = 1;
  for (auto c : exclude) blocked[c] = 1;
  std::erase_if(state.remaining, [&](std::size_t i) { return blocked[i] != 0; });
  state.nuggets = std::move(nug);
  return state;
}

/// Throws Conflict unless `points` are strictly farther than delta from each
/// other and from every current design point.
inline void check_spacing(const CampaignState& s, const std::vector<std::size_t>& points, double delta) {
  std::vector<std::size_t> placed(s.design.begin(), s.design.end());
  for (auto c : points) {
    if (s.in_design(c)) throw Conflict("'" + s.candidates[c].id + "' is already in the design; proposal is stale");
    for (auto p : placed) {
      if (!(distance(s.candidates[c].location, s.candidates[p].location) > delta)) {
        throw Conflict("'" + s.candidates[c].id + "' is within delta of '" + s.candidates[p].id +
                       "'; proposal is stale");
      }
    }
    placed.push_back(c);
  }
}

// ---- event builders -------------------------------------------------------

inline Json make_created(const std::string& id, std::string_view candidates_csv, const Settings& settings) {
  validate_campaign_id(id);
  validate(settings);
  return created_event(id, settings, parse_candidates(candidates_csv));
}

inline Json make_round(const CampaignState& s, std::string_view observations_csv) {
  RoundRecord round;
  round.round = static_cast<int>(s.rounds.size()) + 1;
  round.rows = parse_observations(observations_csv, s);
  for (const auto& prev : s.rounds) {
    if (Json(prev.rows) == Json(round.rows)) {
      throw Conflict("observation file duplicates the content of round " + std::to_string(prev.round));
    }
  }
  // Fold the data in first, then fit on the result.
  const CampaignState merged = apply_event(s, round_event(round));
  const SurveyData data = survey_data(merged);
  round.locations_used = data.size();

  FitOptions opts;
  opts.min_observations = s.settings.min_fit_n;
  opts.nugget_mode = s.settings.nugget_mode;
  const auto locs = candidate_locations(s);
  opts.region_diameter = bounding_diameter(locs);
  const auto* previous = s.latest_fitted_round();
  try {
    round.fit = fit_ml(data, s.settings.kappa, opts);
    round.refit_succeeded = true;
    for (const auto& w : round.fit->warnings) round.warnings.push_back(w);
  } catch (const Error& e) {
    round.warnings.push_back(std::string("refit failed: ") + e.what());
    if (previous != nullptr) {
      round.fit = previous->fit;
      round.warnings.push_back("carrying the fit from round " + std::to_string(previous->round));
    }
  }
  if (round.fit) round.pv = summarize(candidate_pv(merged, round.fit->estimates));
  return round_event(round);
}

inline Json make_proposal(const CampaignState& s, std::optional<long> b_req, std::optional<double> delta_req) {
  const long b = b_req.value_or(static_cast<long>(s.settings.batch_size));
  const double delta = delta_req.value_or(s.settings.delta);
  if (b < 1) throw InvalidArgument("b must be at least 1");
  if (!(delta >= 0.0) || !std::isfinite(delta)) throw InvalidArgument("delta must be finite and non-negative");
  if (const auto* open = s.open_proposal()) {
    throw Conflict("proposal '" + open->id + "' is still open; review it first");
  }
  const auto& fit = current_fit(s);
  const auto outcome = adaptive_next_batch(adaptive_state(s, fit.estimates), static_cast<std::size_t>(b), delta);

  Proposal p;
  p.id = "p" + std::to_string(s.proposals.size() + 1);
  p.round = s.latest_fitted_round()->round;
  p.b = static_cast<std::size_t>(b);
  p.delta = delta;
  for (auto c : outcome.batch_candidates) p.ids.push_back(s.candidates[c].id);
  p.pv = outcome.batch_pv;
  p.exhausted = outcome.exhausted;
  return proposal_event(p);
}

enum class ReviewAction { kAccept, kReject, kAmend };

inline ReviewAction parse_review_action(const std::string& s) {
  if (s == "accept") return ReviewAction::kAccept;
  if (s == "reject") return ReviewAction::kReject;
  if (s == "amend") return ReviewAction::kAmend;
  throw InvalidArgument("action must be accept, reject or amend");
}

inline const Proposal& find_proposal(const CampaignState& s, const std::string& pid) {
  for (const auto& p : s.proposals) {
    if (p.id == pid) return p;
  }
  throw NotFound("unknown proposal '" + pid + "'");
}

inline Json make_review(const CampaignState& s, const std::string& pid, ReviewAction action,
                        const std::vector<std::string>& excluded) {
  const Proposal& p = find_proposal(s, pid);
  if (p.status != ProposalStatus::kOpen) {
    throw Conflict("proposal '" + pid + "' was already reviewed (" + to_string(p.status) + ")");
  }
  const int batch = s.last_batch() + 1;
  if (action == ReviewAction::kReject) {
    if (!excluded.empty()) throw InvalidArgument("reject takes no excluded ids");
    return review_event(pid, ProposalStatus::kRejected, {}, {}, {}, -1);
  }
  if (action == ReviewAction::kAccept) {
    if (!excluded.empty()) throw InvalidArgument("accept takes no excluded ids; use amend");
    std::vector<std::size_t> pts;
    for (const auto& id : p.ids) pts.push_back(s.at(id));
    check_spacing(s, pts, p.delta);
    return review_event(pid, ProposalStatus::kAccepted, {}, {}, {}, batch);
  }

  if (excluded.empty()) throw InvalidArgument("amend needs at least one excluded id");
  std::set<std::string> ex;
  for (const auto& id : excluded) {
    if (std::find(p.ids.begin(), p.ids.end(), id) == p.ids.end()) {
      throw InvalidArgument("excluded id '" + id + "' is not part of proposal '" + pid + "'");
    }
    if (!ex.insert(id).second) throw InvalidArgument("excluded id '" + id + "' listed twice");
  }
  std::vector<std::size_t> kept;
  std::vector<std::size_t> dropped;
  for (const auto& id : p.ids) (ex.count(id) ? dropped : kept).push_back(s.at(id));
  check_spacing(s, kept, p.delta);

  std::vector<std::string> backfill;
  std::vector<double> backfill_pv;
  const std::size_t need = p.b > kept.size() ? p.b - kept.size() : 0;
  if (need > 0) {
    const auto& fit = current_fit(s);
    const auto outcome = adaptive_next_batch(adaptive_state(s, fit.estimates, kept, dropped), need, p.delta);
    for (auto c : outcome.batch_candidates) backfill.push_back(s.candidates[c].id);
    backfill_pv = outcome.batch_pv;
  }
  std::vector<std::string> excluded_sorted(ex.begin(), ex.end());
  return review_event(pid, ProposalStatus::kAmended, excluded_sorted, backfill, backfill_pv, batch);
}

// ---- read views -----------------------------------------------------------

inline Json point_list(const CampaignState& s, const std::vector<std::string>& ids, const std::vector<double>& pv) {
  Json out = Json::array();
  for (std::size_t k = 0; k < ids.size(); ++k) {
    const auto& c = s.candidates[s.at(ids[k])];
    out.push_back(Json{{"id", c.id}, {"x", c.location.x}, {"y", c.location.y}, {"pv", pv[k]}});
  }
  return out;
}

inline Json proposal_view(const CampaignState& s, const Proposal& p) {
  return Json{{"id", p.id},
              {"round", p.round},
              {"status", to_string(p.status)},
              {"b", p.b},
              {"delta", p.delta},
              {"exhausted", p.exhausted},
              {"points", point_list(s, p.ids, p.pv)},
              {"excluded", p.excluded},
              {"backfill", point_list(s, p.backfill, p.backfill_pv)},
              {"batch_index", p.batch_index}};
}

inline Json report_view(const CampaignState& s, int round) {
  if (round < 1 || round > static_cast<int>(s.rounds.size())) {
    throw NotFound("campaign '" + s.id + "' has no round " + std::to_string(round));
  }
  const auto& r = s.rounds[static_cast<std::size_t>(round - 1)];
  Json proposals = Json::array();
  for (const auto& p : s.proposals) {
    if (p.round == round) proposals.push_back(proposal_view(s, p));
  }
  return Json{{"campaign", s.id},
              {"round", r.round},
              {"locations_used", r.locations_used},
              {"observations", r.rows.size()},
              {"fit", r.fit ? Json(*r.fit) : Json(nullptr)},
              {"refit_succeeded", r.refit_succeeded},
              {"warnings", r.warnings},
              {"pv_summary", r.pv ? Json(*r.pv) : Json(nullptr)},
              {"apv", r.pv ? Json(r.pv->mean) : Json(nullptr)},
              {"proposals", proposals}};
}

enum class SurfaceKind { kPv, kMean, kExceedance };

inline SurfaceKind parse_surface_kind(const std::string& s) {
  if (s == "pv") return SurfaceKind::kPv;
  if (s == "mean") return SurfaceKind::kMean;
  if (s == "exceedance") return SurfaceKind::kExceedance;
  throw InvalidArgument("what must be pv, mean or exceedance");
}

/// Threshold parser accepting inf and -inf.
inline double parse_threshold(std::string_view text) {
  double v = 0.0;
  auto [ptr, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || ptr != text.data() + text.size() || std::isnan(v)) {
    throw InvalidArgument("threshold c must be a number");
  }
  return v;
}

/// Per-candidate surface under the latest fit. The mean is on the logit
/// scale; in counts mode a pointwise inverse logit of it is added as an
/// approximate prevalence. Exceedance is P(S(x) + trend > c), c on the
/// logit scale.
inline Json surface_view(const CampaignState& s, SurfaceKind kind, std::optional<double> c = {}) {
  const auto& fit = current_fit(s);
  const auto& model = fit.estimates;
  std::vector<double> values;
  std::optional<std::vector<double>> prevalence;
  if (kind == SurfaceKind::kPv) {
    values = candidate_pv(s, model);
  } else {
    if (kind == SurfaceKind::kExceedance && !c) throw InvalidArgument("exceedance needs a threshold c");
    const auto covs = candidate_covariates(s);
    KrigingOptions opts;
    opts.nugget_mode = s.settings.nugget_mode;
    const auto pred = krige(model, survey_data(s), candidate_locations(s), covs, opts);
    if (kind == SurfaceKind::kMean) {
      values = pred.mean;
      if (s.settings.response_mode == ResponseMode::kCounts) {
        prevalence.emplace();
        for (double m : values) prevalence->push_back(1.0 / (1.0 + std::exp(-m)));
      }
    } else {
      values = exceedance_probability(pred, *c);
    }
  }
  Json ids = Json::array();
  for (const auto& cand : s.candidates) ids.push_back(cand.id);
  const char* names[] = {"pv", "mean", "exceedance"};
  Json out{{"campaign", s.id},
           {"what", names[static_cast<int>(kind)]},
           {"round", s.latest_fitted_round()->round},
           {"summary", summarize(values)},
           {"ids", ids},
           {"values", values}};
  if (kind == SurfaceKind::kExceedance) {
    out["c"] = std::isfinite(*c) ? Json(*c) : Json(*c > 0 ? "inf" : "-inf");
  }
  if (prevalence) out["prevalence"] = *prevalence;
  return out;
}

}  // namespace geodesign::campaign
