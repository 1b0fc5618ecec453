#pragma once

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "geodesign/campaign/state.hpp"

namespace geodesign::campaign {

/// On-disk layout: <root>/campaigns/<id>/events.jsonl (append-only, one
/// event per line) and snapshot.json (state after the last event).
class CampaignStore {
 public:
  explicit CampaignStore(std::filesystem::path root) : root_(std::move(root)) {
    std::error_code ec;
    std::filesystem::create_directories(root_ / "campaigns", ec);
    if (ec) throw Error("cannot create data directory " + (root_ / "campaigns").string() + ": " + ec.message());
  }

  [[nodiscard]] const std::filesystem::path& root() const { return root_; }
  [[nodiscard]] std::filesystem::path dir(const std::string& id) const { return root_ / "campaigns" / id; }
  [[nodiscard]] std::filesystem::path events_path(const std::string& id) const { return dir(id) / "events.jsonl"; }
  [[nodiscard]] std::filesystem::path snapshot_path(const std::string& id) const {
    return dir(id) / "snapshot.json";
  }

  [[nodiscard]] bool exists(const std::string& id) const { return std::filesystem::exists(events_path(id)); }

  [[nodiscard]] std::vector<std::string> list() const {
    std::vector<std::string> ids;
    for (const auto& e : std::filesystem::directory_iterator(root_ / "campaigns")) {
      if (e.is_directory() && std::filesystem::exists(e.path() / "events.jsonl")) {
        ids.push_back(e.path().filename().string());
      }
    }
    std::sort(ids.begin(), ids.end());
    return ids;
  }

  /// Appends the event, then rewrites the snapshot. A crash between the two
  /// leaves a stale snapshot that load() repairs from the log.
  void commit(const std::string& id, const Json& event, const CampaignState& after) const {
    std::filesystem::create_directories(dir(id));
    {
      std::ofstream out(events_path(id), std::ios::app | std::ios::binary);
      if (!out) throw Error("cannot open " + events_path(id).string() + " for append");
      out << event.dump() << '\n';
      out.flush();
      if (!out) throw Error("write failed: " + events_path(id).string());
    }
    write_atomic(snapshot_path(id), snapshot_text(after));
  }

  [[nodiscard]] std::vector<Json> read_events(const std::string& id) const {
    std::ifstream in(events_path(id), std::ios::binary);
    if (!in) throw Error("cannot read " + events_path(id).string());
    std::vector<Json> events;
    std::string line;
    std::size_t n = 0;
    while (std::getline(in, line)) {
      ++n;
      if (line.empty()) continue;
      try {
        events.push_back(Json::parse(line));
      } catch (const nlohmann::json::exception& e) {
        throw Error(events_path(id).string() + ":" + std::to_string(n) + ": " + e.what());
      }
    }
    return events;
  }

  /// Replays the log; rewrites the snapshot if it is missing or differs.
  [[nodiscard]] CampaignState load(const std::string& id) const {
    const CampaignState s = replay(read_events(id));
    const std::string text = snapshot_text(s);
    if (read_file(snapshot_path(id)) != text) write_atomic(snapshot_path(id), text);
    return s;
  }

  static std::string snapshot_text(const CampaignState& s) { return Json(s).dump(2) + "\n"; }

  static std::string read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) return {};
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
  }

  static void write_atomic(const std::filesystem::path& p, const std::string& text) {
    const auto tmp = p.string() + ".tmp";
    {
      std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
      if (!out) throw Error("cannot open " + tmp + " for writing");
      out << text;
      out.flush();
      if (!out) throw Error("write failed: " + tmp);
    }
    std::error_code ec;
    std::filesystem::rename(tmp, p, ec);
    if (ec) throw Error("cannot replace " + p.string() + ": " + ec.message());
  }

 private:
  std::filesystem::path root_;
};

}  // namespace geodesign::campaign
