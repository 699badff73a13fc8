#pragma once

#include <atomic>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "mixbo/campaign.hpp"
#include "mixbo/error.hpp"

namespace mixbo {

/// Event-log files under one directory, one `<id>.events.jsonl` per campaign.
class CampaignStore {
 public:
  explicit CampaignStore(std::filesystem::path dir);

  /// $MIXBO_STATE_DIR, else ./mixbo_state.
  static std::filesystem::path default_dir();

  const std::filesystem::path& dir() const { return dir_; }
  std::filesystem::path log_path(const std::string& id) const;
  bool exists(const std::string& id) const;
  std::vector<std::string> list() const;

  /// Writes a new log; Conflict if the id is taken.
  void create(const std::string& id, const CampaignState& state) const;
  /// NotFound for unknown ids.
  CampaignState load(const std::string& id) const;
  /// Appends the events `after` has beyond `before`.
  void append(const std::string& id, const CampaignState& before, const CampaignState& after) const;
  std::string next_id(const std::string& label) const;

  static void validate_id(const std::string& id);

 private:
  std::filesystem::path dir_;
};

/// Reads a campaign from an event-log path or, failing that, from the store.
CampaignState load_campaign(const CampaignStore& store, const std::string& ref);

struct HttpRequest {
  std::string method;
  std::string path;
  std::string body;
  std::map<std::string, std::string> headers;  // lower-case names
  std::map<std::string, std::string> query;
};

struct HttpResponse {
  int status = 200;
  nlohmann::json body;
};

struct ServiceOptions {
  std::filesystem::path state_dir = CampaignStore::default_dir();
  std::string token;  // empty: no authentication
};

/// Campaign lifecycle over HTTP. Mutations on one campaign are serialized by
/// a try-lock (a second writer gets conflict); proposals run on a worker
/// thread and are polled.
class CampaignService {
 public:
  explicit CampaignService(ServiceOptions options);
  ~CampaignService();
  CampaignService(const CampaignService&) = delete;
  CampaignService& operator=(const CampaignService&) = delete;

  HttpResponse handle(const HttpRequest& request);

  /// Blocks until every running proposal job has finished.
  void wait_idle();

  /// Serves until `stop()`; returns false if the address could not be bound.
  bool serve(const std::string& host, int port);
  void stop();
  /// Port picked when serving on port 0.
  int bound_port() const { return bound_port_.load(); }
  bool is_running() const;

 private:
  struct Job {
    std::mutex mutex;
    std::string status = "running";  // running, done, failed
    nlohmann::json result;
    std::thread worker;
  };
  struct Slot {
    std::atomic<bool> busy{false};
    std::shared_ptr<Job> job;
  };

  Slot& slot(const std::string& id);
  HttpResponse route(const HttpRequest& request);
  HttpResponse create(const HttpRequest& request);
  HttpResponse get_campaign(const std::string& id);
  HttpResponse post_results(const std::string& id, const HttpRequest& request);
  HttpResponse post_propose(const std::string& id, const HttpRequest& request);
  HttpResponse get_proposal(const std::string& id);
  HttpResponse post_evaluate(const std::string& id, const HttpRequest& request);
  HttpResponse get_history(const std::string& id);
  HttpResponse get_diagnostics(const std::string& id);
  HttpResponse get_summary(const std::string& id);

  std::optional<std::string> request_id(const HttpRequest& request) const;

  ServiceOptions options_;
  CampaignStore store_;
  std::mutex slots_mutex_;
  std::map<std::string, std::unique_ptr<Slot>> slots_;
  std::mutex replay_mutex_;
  std::map<std::string, HttpResponse> replies_;
  std::mutex create_mutex_;
  std::mutex join_mutex_;
  struct ServerHandle;
  std::unique_ptr<ServerHandle> server_;
  std::atomic<int> bound_port_{0};
};

/// Parses "results" rows: {"id", "mfr", "youngs_modulus", "impact_strength"}
/// or {"id", "metrics": {...}}.
std::vector<ResultEntry> results_from_json(const nlohmann::json& j);

}  // namespace mixbo
