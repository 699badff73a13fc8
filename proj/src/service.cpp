#include "mixbo/service.hpp"

#include <httplib.h>

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <regex>
#include <sstream>
#include <utility>

#include "mixbo/diagnostics.hpp"

namespace mixbo {

namespace fs = std::filesystem;

// ---- store ------------------------------------------------------------------

CampaignStore::CampaignStore(fs::path dir) : dir_(std::move(dir)) {}

fs::path CampaignStore::default_dir() {
  if (const char* env = std::getenv("MIXBO_STATE_DIR"); env && *env) return env;
  return "mixbo_state";
}

void CampaignStore::validate_id(const std::string& id) {
  static const std::regex pattern("[A-Za-z0-9_-]{1,64}");
  if (!std::regex_match(id, pattern)) {
    throw Error(ErrorKind::InvalidArgument, "campaign ids use letters, digits, '-' and '_' (at most 64)",
                {{"id", id}});
  }
}

fs::path CampaignStore::log_path(const std::string& id) const { return dir_ / (id + ".events.jsonl"); }

bool CampaignStore::exists(const std::string& id) const { return fs::exists(log_path(id)); }

std::vector<std::string> CampaignStore::list() const {
  std::vector<std::string> ids;
  if (!fs::exists(dir_)) return ids;
  const std::string suffix = ".events.jsonl";
  for (const auto& entry : fs::directory_iterator(dir_)) {
    const auto name = entry.path().filename().string();
    if (name.size() > suffix.size() && name.ends_with(suffix)) {
      ids.push_back(name.substr(0, name.size() - suffix.size()));
    }
  }
  std::sort(ids.begin(), ids.end());
  return ids;
}

void CampaignStore::create(const std::string& id, const CampaignState& state) const {
  validate_id(id);
  fs::create_directories(dir_);
  if (exists(id)) throw Error(ErrorKind::Conflict, "campaign " + id + " already exists", {{"id", id}});
  std::ofstream out(log_path(id), std::ios::binary);
  out << event_log(state);
  if (!out) throw Error(ErrorKind::Internal, "could not write " + log_path(id).string());
}

CampaignState CampaignStore::load(const std::string& id) const {
  validate_id(id);
  std::ifstream in(log_path(id), std::ios::binary);
  if (!in) throw Error(ErrorKind::NotFound, "no campaign with id " + id, {{"id", id}});
  std::stringstream buffer;
  buffer << in.rdbuf();
  return replay(parse_event_log(buffer.str()));
}

void CampaignStore::append(const std::string& id, const CampaignState& before, const CampaignState& after) const {
  if (after.events.size() <= before.events.size()) return;
  std::ofstream out(log_path(id), std::ios::binary | std::ios::app);
  for (std::size_t i = before.events.size(); i < after.events.size(); ++i) out << after.events[i].dump() << '\n';
  if (!out) throw Error(ErrorKind::Internal, "could not append to " + log_path(id).string());
}

std::string CampaignStore::next_id(const std::string& label) const {
  std::string base;
  for (char c : label) {
    if (std::isalnum(static_cast<unsigned char>(c)) || c == '-' || c == '_') base += c;
    else if (c == ' ') base += '-';
  }
  if (base.empty()) base = "campaign";
  base = base.substr(0, 48);
  for (int n = 1;; ++n) {
    const std::string id = base + "-" + std::to_string(n);
    if (!exists(id)) return id;
  }
}

CampaignState load_campaign(const CampaignStore& store, const std::string& ref) {
  if (ref.find('/') != std::string::npos || ref.ends_with(".jsonl")) {
    std::ifstream in(ref, std::ios::binary);
    if (!in) throw Error(ErrorKind::NotFound, "cannot read event log " + ref);
    std::stringstream buffer;
    buffer << in.rdbuf();
    return replay(parse_event_log(buffer.str()));
  }
  return store.load(ref);
}

std::vector<ResultEntry> results_from_json(const nlohmann::json& j) {
  const nlohmann::json& rows = j.is_object() && j.contains("results") ? j.at("results") : j;
  if (!rows.is_array()) throw Error(ErrorKind::SchemaError, "results must be an array");
  std::vector<ResultEntry> out;
  try {
    for (const auto& r : rows) {
      const auto id = r.at("id").get<std::string>();
      const auto& m = r.contains("metrics") ? r.at("metrics") : r;
      out.emplace_back(id, metrics_from_json(m));
    }
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("results: ") + e.what());
  }
  return out;
}

// ---- service ------------------------------------------------------------------

struct CampaignService::ServerHandle {
  httplib::Server server;
};

namespace {

HttpResponse error_response(const Error& e) {
  return {http_status(api_code(e.kind())), error_envelope(e)};
}

nlohmann::json parse_body(const std::string& body) {
  if (body.find_first_not_of(" \t\r\n") == std::string::npos) return nlohmann::json::object();
  try {
    return nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("request body is not JSON: ") + e.what());
  }
}

// Writer claim on one campaign; may be released from another thread.
class WriterClaim {
 public:
  WriterClaim(std::atomic<bool>& busy, const std::string& id) : busy_(&busy) {
    bool expected = false;
    if (!busy.compare_exchange_strong(expected, true)) {
      busy_ = nullptr;
      throw Error(ErrorKind::Conflict, "another mutation of campaign " + id + " is in progress", {{"id", id}});
    }
  }
  WriterClaim(WriterClaim&& other) noexcept : busy_(std::exchange(other.busy_, nullptr)) {}
  WriterClaim(const WriterClaim&) = delete;
  WriterClaim& operator=(const WriterClaim&) = delete;
  WriterClaim& operator=(WriterClaim&&) = delete;
  ~WriterClaim() { release(); }

  void release() {
    if (busy_) busy_->store(false);
    busy_ = nullptr;
  }

 private:
  std::atomic<bool>* busy_;
};

nlohmann::json campaign_json(const std::string& id, const CampaignState& state) {
  nlohmann::json j = state.to_json();
  j["id"] = id;
  return j;
}

}  // namespace

CampaignService::CampaignService(ServiceOptions options)
    : options_(std::move(options)), store_(options_.state_dir), server_(std::make_unique<ServerHandle>()) {
  fs::create_directories(options_.state_dir);
}

CampaignService::~CampaignService() {
  stop();
  wait_idle();
}

CampaignService::Slot& CampaignService::slot(const std::string& id) {
  std::lock_guard lock(slots_mutex_);
  auto& s = slots_[id];
  if (!s) s = std::make_unique<Slot>();
  return *s;
}

void CampaignService::wait_idle() {
  std::vector<std::shared_ptr<Job>> jobs;
  {
    std::lock_guard lock(slots_mutex_);
    for (auto& [id, s] : slots_) {
      if (s->job) jobs.push_back(s->job);
    }
  }
  std::lock_guard join(join_mutex_);
  for (auto& job : jobs) {
    if (job->worker.joinable()) job->worker.join();
  }
}

std::optional<std::string> CampaignService::request_id(const HttpRequest& request) const {
  if (auto it = request.headers.find("x-request-id"); it != request.headers.end() && !it->second.empty()) {
    return it->second;
  }
  if (auto it = request.headers.find("idempotency-key"); it != request.headers.end() && !it->second.empty()) {
    return it->second;
  }
  return std::nullopt;
}

HttpResponse CampaignService::handle(const HttpRequest& request) {
  try {
    if (!options_.token.empty()) {
      const auto it = request.headers.find("authorization");
      if (it == request.headers.end() || it->second != "Bearer " + options_.token) {
        return {401, error_envelope(ApiCode::InvalidInput, "missing or wrong bearer token")};
      }
    }
    std::optional<std::string> rid;
    if (request.method == "POST") {
      rid = request_id(request);
      if (!rid) {
        const auto body = parse_body(request.body);
        if (body.is_object() && body.contains("request_id")) rid = body.at("request_id").get<std::string>();
      }
    }
    const std::string key = rid ? request.method + " " + request.path + " " + *rid : std::string();
    if (rid) {
      std::lock_guard lock(replay_mutex_);
      if (auto it = replies_.find(key); it != replies_.end()) return it->second;
    }
    HttpResponse response = route(request);
    if (rid && response.status < 300) {
      std::lock_guard lock(replay_mutex_);
      replies_.emplace(key, response);
    }
    return response;
  } catch (const Error& e) {
    return error_response(e);
  } catch (const nlohmann::json::exception& e) {
    return {400, error_envelope(ApiCode::InvalidInput, e.what())};
  } catch (const std::exception& e) {
    return {500, error_envelope(ApiCode::Internal, e.what())};
  }
}

HttpResponse CampaignService::route(const HttpRequest& request) {
  static const std::regex campaign_path("^/campaigns/([^/]+)(?:/([a-z_]+))?/?$");
  const auto& m = request.method;
  if (request.path == "/health" && m == "GET") return {200, {{"status", "ok"}}};
  if (request.path == "/campaigns" || request.path == "/campaigns/") {
    if (m == "POST") return create(request);
    if (m == "GET") return {200, {{"campaigns", store_.list()}}};
  }
  std::smatch match;
  if (std::regex_match(request.path, match, campaign_path)) {
    const std::string id = match[1];
    CampaignStore::validate_id(id);
    const std::string action = match[2];
    if (action.empty() && m == "GET") return get_campaign(id);
    if (action == "results" && m == "POST") return post_results(id, request);
    if (action == "propose" && m == "POST") return post_propose(id, request);
    if ((action == "propose" || action == "proposal") && m == "GET") return get_proposal(id);
    if (action == "evaluate" && m == "POST") return post_evaluate(id, request);
    if (action == "history" && m == "GET") return get_history(id);
    if (action == "diagnostics" && m == "GET") return get_diagnostics(id);
    if (action == "summary" && m == "GET") return get_summary(id);
  }
  return {404, error_envelope(ApiCode::NotFound, "no route for " + m + " " + request.path)};
}

HttpResponse CampaignService::create(const HttpRequest& request) {
  const auto body = parse_body(request.body);
  const nlohmann::json config_json = body.contains("config") ? body.at("config") : body;
  const auto config = CampaignConfig::from_json(config_json);
  const auto state = create_campaign(config);
  std::lock_guard lock(create_mutex_);
  const std::string id = body.contains("id") ? body.at("id").get<std::string>() : store_.next_id(config.label);
  store_.create(id, state);
  return {201, campaign_json(id, state)};
}

HttpResponse CampaignService::get_campaign(const std::string& id) {
  return {200, campaign_json(id, store_.load(id))};
}

HttpResponse CampaignService::post_results(const std::string& id, const HttpRequest& request) {
  auto& s = slot(id);
  WriterClaim claim(s.busy, id);
  const auto before = store_.load(id);
  const auto after = record_results(before, results_from_json(parse_body(request.body)));
  store_.append(id, before, after);
  return {200, campaign_json(id, after)};
}

HttpResponse CampaignService::post_evaluate(const std::string& id, const HttpRequest&) {
  auto& s = slot(id);
  WriterClaim claim(s.busy, id);
  const auto before = store_.load(id);
  const auto after = evaluate_with_oracle(before, campaign_oracle(before.config));
  store_.append(id, before, after);
  return {200, campaign_json(id, after)};
}

HttpResponse CampaignService::post_propose(const std::string& id, const HttpRequest& request) {
  auto& s = slot(id);
  WriterClaim claim(s.busy, id);
  const auto before = store_.load(id);
  if (before.status != CampaignStatus::ReadyToPropose) {
    throw Error(ErrorKind::InvalidState,
                "campaign is not ready to propose (status " + std::string(to_string(before.status)) + ")",
                {{"status", to_string(before.status)}});
  }
  std::shared_ptr<Job> previous;
  {
    std::lock_guard l(slots_mutex_);
    previous = s.job;
  }
  if (previous) {
    std::lock_guard join(join_mutex_);
    if (previous->worker.joinable()) previous->worker.join();
  }
  auto job = std::make_shared<Job>();
  {
    std::lock_guard l(slots_mutex_);
    s.job = job;
  }
  const bool wait = request.query.count("wait") && request.query.at("wait") != "false" &&
                    request.query.at("wait") != "0";
  std::unique_lock spawn(join_mutex_);
  job->worker = std::thread([this, id, job, before, held = std::move(claim)]() mutable {
    nlohmann::json result;
    std::string status = "done";
    try {
      const auto after = propose_batch(before);
      store_.append(id, before, after);
      nlohmann::json batch = nlohmann::json::array();
      for (const auto* e : after.open_batch()) batch.push_back(to_json(*e));
      result = {{"batch", after.next_batch}, {"experiments", batch}, {"campaign", campaign_json(id, after)}};
    } catch (const Error& e) {
      status = "failed";
      result = error_envelope(e);
      result["http_status"] = http_status(api_code(e.kind()));
    } catch (const std::exception& e) {
      status = "failed";
      result = error_envelope(ApiCode::Internal, e.what());
      result["http_status"] = 500;
    }
    held.release();
    std::lock_guard guard(job->mutex);
    job->status = status;
    job->result = std::move(result);
  });
  spawn.unlock();
  if (wait) {
    {
      std::lock_guard join(join_mutex_);
      if (job->worker.joinable()) job->worker.join();
    }
    return get_proposal(id);
  }
  return {202, {{"id", id}, {"status", "running"}, {"poll", "/campaigns/" + id + "/proposal"}}};
}

HttpResponse CampaignService::get_proposal(const std::string& id) {
  std::shared_ptr<Job> job;
  {
    std::lock_guard lock(slots_mutex_);
    if (auto it = slots_.find(id); it != slots_.end()) job = it->second->job;
  }
  if (!job) {
    if (!store_.exists(id)) throw Error(ErrorKind::NotFound, "no campaign with id " + id, {{"id", id}});
    throw Error(ErrorKind::NotFound, "no proposal has been requested for " + id, {{"id", id}});
  }
  std::lock_guard guard(job->mutex);
  if (job->status == "running") return {202, {{"id", id}, {"status", "running"}}};
  if (job->status == "failed") {
    nlohmann::json body = job->result;
    const int code = body.value("http_status", 500);
    body.erase("http_status");
    body["status"] = "failed";
    return {code, body};
  }
  nlohmann::json body = job->result;
  body["status"] = "done";
  body["id"] = id;
  return {200, body};
}

HttpResponse CampaignService::get_history(const std::string& id) {
  const auto state = store_.load(id);
  nlohmann::json experiments = nlohmann::json::array();
  for (const auto& e : state.history) experiments.push_back(to_json(e));
  return {200, {{"id", id}, {"experiments", experiments}, {"events", state.events}}};
}

HttpResponse CampaignService::get_diagnostics(const std::string& id) {
  return {200, diagnose_campaign(store_.load(id)).to_json()};
}

HttpResponse CampaignService::get_summary(const std::string& id) {
  nlohmann::json j = campaign_summary(store_.load(id)).to_json();
  j["id"] = id;
  return {200, j};
}

bool CampaignService::is_running() const { return server_->server.is_running(); }

bool CampaignService::serve(const std::string& host, int port) {
  auto& server = server_->server;
  const auto adapter = [this](const httplib::Request& req, httplib::Response& res) {
    HttpRequest r;
    r.method = req.method;
    r.path = req.path;
    r.body = req.body;
    for (const auto& [k, v] : req.headers) {
      std::string key = k;
      std::transform(key.begin(), key.end(), key.begin(), [](unsigned char c) { return std::tolower(c); });
      r.headers[key] = v;
    }
    for (const auto& [k, v] : req.params) r.query[k] = v;
    const auto out = handle(r);
    res.status = out.status;
    res.set_content(out.body.dump(), "application/json");
  };
  server.Get(".*", adapter);
  server.Post(".*", adapter);
  if (port == 0) {
    const int p = server.bind_to_any_port(host);
    if (p <= 0) return false;
    bound_port_ = p;
  } else {
    if (!server.bind_to_port(host, port)) return false;
    bound_port_ = port;
  }
  return server.listen_after_bind();
}

void CampaignService::stop() {
  if (server_ && server_->server.is_running()) server_->server.stop();
}

}  // namespace mixbo
