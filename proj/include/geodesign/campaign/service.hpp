#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>

#include "geodesign/campaign/engine.hpp"
#include "geodesign/campaign/store.hpp"

namespace geodesign::campaign {

/// Campaign repository shared by the CLI and the HTTP server. Writes to one
/// campaign are serialized; readers take the current immutable snapshot and
/// never wait on a writer.
class CampaignService {
 public:
  explicit CampaignService(std::filesystem::path data_dir) : store_(std::move(data_dir)) {}

  [[nodiscard]] const CampaignStore& store() const { return store_; }

  Json create(const std::string& id, std::string_view candidates_csv, const Settings& settings) {
    validate_campaign_id(id);
    auto entry = entry_for(id, true);
    std::lock_guard writer(entry->writer);
    if (snapshot(*entry) || store_.exists(id)) throw Conflict("campaign '" + id + "' already exists");
    const Json event = make_created(id, candidates_csv, settings);
    commit(*entry, id, CampaignState{}, event);
    return summary_view(*snapshot(*entry));
  }

  [[nodiscard]] std::vector<std::string> list() const { return store_.list(); }

  [[nodiscard]] std::shared_ptr<const CampaignState> state(const std::string& id) {
    return snapshot(*loaded(id));
  }

  Json get(const std::string& id) { return Json(*state(id)); }

  Json ingest(const std::string& id, std::string_view observations_csv) {
    return write(id, [&](const CampaignState& s) { return make_round(s, observations_csv); },
                 [](const CampaignState& s) { return report_view(s, static_cast<int>(s.rounds.size())); });
  }

  Json propose(const std::string& id, std::optional<long> b, std::optional<double> delta) {
    return write(id, [&](const CampaignState& s) { return make_proposal(s, b, delta); },
                 [](const CampaignState& s) { return proposal_view(s, s.proposals.back()); });
  }

  Json review(const std::string& id, const std::string& pid, ReviewAction action,
              const std::vector<std::string>& excluded) {
    return write(id, [&](const CampaignState& s) { return make_review(s, pid, action, excluded); },
                 [&](const CampaignState& s) {
                   Json out = proposal_view(s, find_proposal(s, pid));
                   out["design_size"] = s.design.size();
                   out["infeasible"] = s.infeasible;
                   return out;
                 });
  }

  Json surface(const std::string& id, SurfaceKind kind, std::optional<double> c = {}) {
    return surface_view(*state(id), kind, c);
  }

  Json report(const std::string& id, int round) { return report_view(*state(id), round); }

  static Json summary_view(const CampaignState& s) {
    return Json{{"id", s.id},
                {"version", s.version},
                {"crs", s.settings.crs},
                {"settings", s.settings},
                {"candidates", s.candidates.size()},
                {"design_size", s.design.size()},
                {"rounds", s.rounds.size()},
                {"proposals", s.proposals.size()},
                {"infeasible", s.infeasible.size()}};
  }

 private:
  struct Entry {
    std::mutex writer;
    mutable std::mutex swap;
    std::shared_ptr<const CampaignState> state;
  };

  static std::shared_ptr<const CampaignState> snapshot(const Entry& e) {
    std::lock_guard g(e.swap);
    return e.state;
  }

  std::shared_ptr<Entry> entry_for(const std::string& id, bool create) {
    std::lock_guard g(registry_);
    auto it = entries_.find(id);
    if (it != entries_.end()) return it->second;
    if (!create && !store_.exists(id)) throw NotFound("unknown campaign '" + id + "'");
    return entries_.emplace(id, std::make_shared<Entry>()).first->second;
  }

  std::shared_ptr<Entry> loaded(const std::string& id) {
    validate_campaign_id(id);
    auto entry = entry_for(id, false);
    if (!snapshot(*entry)) {
      std::lock_guard writer(entry->writer);
      if (!snapshot(*entry)) {
        if (!store_.exists(id)) throw NotFound("unknown campaign '" + id + "'");
        auto s = std::make_shared<const CampaignState>(store_.load(id));
        std::lock_guard g(entry->swap);
        entry->state = std::move(s);
      }
    }
    return entry;
  }

  void commit(Entry& entry, const std::string& id, const CampaignState& before, const Json& event) {
    auto after = std::make_shared<const CampaignState>(apply_event(before, event));
    store_.commit(id, event, *after);
    std::lock_guard g(entry.swap);
    entry.state = std::move(after);
  }

  template <typename MakeEvent, typename View>
  Json write(const std::string& id, MakeEvent&& make_event, View&& view) {
    auto entry = loaded(id);
    std::lock_guard writer(entry->writer);
    const auto before = snapshot(*entry);
    const Json event = make_event(*before);
    commit(*entry, id, *before, event);
    return view(*snapshot(*entry));
  }

  CampaignStore store_;
  std::mutex registry_;
  std::map<std::string, std::shared_ptr<Entry>> entries_;
};

/// Background jobs with a bounded wait: run() returns the result if the job
/// finishes within the timeout, otherwise its id for polling.
class JobRunner {
 public:
  enum class Status { kRunning, kDone, kFailed };

  struct Job {
    std::string id;
    Status status = Status::kRunning;
    Json result;
    int http_status = 200;
  };

  using Task = std::function<std::pair<int, Json>()>;

  ~JobRunner() {
    std::vector<std::thread> threads;
    {
      std::lock_guard g(mutex_);
      threads.swap(threads_);
    }
    for (auto& t : threads) t.join();
  }

  /// Returns the finished job, or a running snapshot after `timeout`.
  Job run(Task task, std::chrono::milliseconds timeout) {
    auto slot = std::make_shared<Slot>();
    std::string id;
    {
      std::lock_guard g(mutex_);
      id = "job" + std::to_string(++counter_);
      slot->job.id = id;
      jobs_[id] = slot;
      threads_.emplace_back([slot, task = std::move(task)] {
        std::pair<int, Json> r;
        bool ok = true;
        try {
          r = task();
        } catch (...) {
          ok = false;
          r = {500, Json{{"error", "internal error"}}};
        }
        std::lock_guard g(slot->m);
        slot->job.http_status = r.first;
        slot->job.result = std::move(r.second);
        slot->job.status = ok && r.first < 400 ? Status::kDone : Status::kFailed;
        slot->cv.notify_all();
      });
    }
    std::unique_lock lk(slot->m);
    slot->cv.wait_for(lk, timeout, [&] { return slot->job.status != Status::kRunning; });
    return slot->job;
  }

  [[nodiscard]] std::optional<Job> get(const std::string& id) const {
    std::shared_ptr<Slot> slot;
    {
      std::lock_guard g(mutex_);
      const auto it = jobs_.find(id);
      if (it == jobs_.end()) return std::nullopt;
      slot = it->second;
    }
    std::lock_guard g(slot->m);
    return slot->job;
  }

  static std::string to_string(Status s) {
    switch (s) {
      case Status::kRunning:
        return "running";
      case Status::kDone:
        return "done";
      case Status::kFailed:
        return "failed";
    }
    return "running";
  }

 private:
  struct Slot {
    std::mutex m;
    std::condition_variable cv;
    Job job;
  };

  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<Slot>> jobs_;
  std::vector<std::thread> threads_;
  std::size_t counter_ = 0;
};

}  // namespace geodesign::campaign
