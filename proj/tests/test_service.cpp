#include <doctest.h>

#include <chrono>
#include <filesystem>
#include <fstream>
#include <thread>

#include "mixbo/service.hpp"
#include "test_configs.hpp"

#include <httplib.h>

using namespace mixbo;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mixbo-test-" + name);
  fs::remove_all(dir);
  return dir;
}

HttpRequest req(std::string method, std::string path, nlohmann::json body = nullptr) {
  HttpRequest r;
  r.method = std::move(method);
  r.path = std::move(path);
  if (!body.is_null()) r.body = body.dump();
  return r;
}

nlohmann::json slow_config() {
  auto j = testcfg::quick("run4", 8);
  j["optimizer"] = {{"starts", 64}, {"raw_samples", 256}, {"iterations", 100}, {"mc_samples", 128}};
  return j;
}

}  // namespace

TEST_CASE("create, fetch and list campaigns") {
  CampaignService service({fresh_dir("create"), ""});
  auto r = service.handle(req("POST", "/campaigns", {{"id", "c1"}, {"config", testcfg::quick("run4", 1)}}));
  REQUIRE(r.status == 201);
  CHECK(r.body["id"] == "c1");
  r = service.handle(req("GET", "/campaigns/c1"));
  CHECK(r.status == 200);
  CHECK(r.body["config"]["strategy"] == "run4");
  CHECK(service.handle(req("GET", "/campaigns")).body["campaigns"] == nlohmann::json::array({"c1"}));
  CHECK(service.handle(req("POST", "/campaigns", {{"id", "c1"}, {"config", testcfg::quick("run4", 1)}})).status == 409);
  CHECK(service.handle(req("GET", "/campaigns/nope")).status == 404);
  CHECK(service.handle(req("GET", "/campaigns/bad%20id")).status == 400);
  CHECK(service.handle(req("POST", "/campaigns", {{"config", {{"strategy", "run7"}}}})).status == 400);
  CHECK(service.handle(req("GET", "/nowhere")).status == 404);
  HttpRequest broken = req("POST", "/campaigns");
  broken.body = "{not json";
  const auto e = service.handle(broken);
  CHECK(e.status == 400);
  CHECK(e.body["error"]["code"] == "invalid_input");
}

TEST_CASE("results then propose advance the campaign") {
  CampaignService service({fresh_dir("advance"), ""});
  service.handle(req("POST", "/campaigns", {{"id", "c2"}, {"config", testcfg::quick("run4", 2)}}));
  auto p = req("POST", "/campaigns/c2/propose");
  p.query["wait"] = "true";
  auto r = service.handle(p);
  REQUIRE(r.status == 200);
  CHECK(r.body["experiments"].size() == 4);

  nlohmann::json results = nlohmann::json::array();
  for (const auto& e : r.body["experiments"]) {
    results.push_back({{"id", e["id"]}, {"mfr", 9.5}, {"youngs_modulus", 1550.0}, {"impact_strength", 8.5}});
  }
  auto partial = results;
  partial.erase(partial.begin());
  r = service.handle(req("POST", "/campaigns/c2/results", {{"results", partial}}));
  CHECK(r.status == 409);
  CHECK(r.body["error"]["kind"] == "IncompleteBatch");
  r = service.handle(req("POST", "/campaigns/c2/results", {{"results", results}}));
  REQUIRE(r.status == 200);
  CHECK(r.body["next_batch"] == 1);
  CHECK(service.handle(req("POST", "/campaigns/c2/results", {{"results", results}})).status == 409);

  r = service.handle(p);
  REQUIRE(r.status == 200);
  CHECK(r.body["batch"] == 1);
  CHECK(r.body["experiments"].size() == 3);
  r = service.handle(req("POST", "/campaigns/c2/evaluate"));
  CHECK(r.status == 200);
  CHECK(r.body["status"] == "complete");
  const auto summary = service.handle(req("GET", "/campaigns/c2/summary"));
  CHECK(summary.body["completed"] == 7);
  CHECK(summary.body["feasible_count"].get<int>() >= 4);
  CHECK(service.handle(req("GET", "/campaigns/c2/history")).body["experiments"].size() == 7);
  CHECK(service.handle(req("GET", "/campaigns/c2/diagnostics")).body["schema"] == "diagnostics_v1");
}

TEST_CASE("a second writer during a proposal gets conflict") {
  CampaignService service({fresh_dir("conflict"), ""});
  service.handle(req("POST", "/campaigns", {{"id", "c3"}, {"config", slow_config()}}));
  auto p = req("POST", "/campaigns/c3/propose");
  p.query["wait"] = "true";
  service.handle(p);
  service.handle(req("POST", "/campaigns/c3/evaluate"));

  const auto started = service.handle(req("POST", "/campaigns/c3/propose"));
  CHECK(started.status == 202);
  const auto second = service.handle(req("POST", "/campaigns/c3/propose"));
  CHECK(second.status == 409);
  CHECK(second.body["error"]["code"] == "conflict");
  CHECK(service.handle(req("POST", "/campaigns/c3/evaluate")).status == 409);
  service.wait_idle();
  const auto polled = service.handle(req("GET", "/campaigns/c3/proposal"));
  CHECK(polled.status == 200);
  CHECK(polled.body["status"] == "done");
  CHECK(polled.body["batch"] == 1);
}

TEST_CASE("request ids make POSTs idempotent") {
  CampaignService service({fresh_dir("idem"), ""});
  auto create = req("POST", "/campaigns", {{"id", "c4"}, {"config", testcfg::quick("run4", 3)}});
  create.headers["x-request-id"] = "abc";
  const auto a = service.handle(create);
  const auto b = service.handle(create);
  CHECK(a.status == 201);
  CHECK(b.status == 201);
  CHECK(a.body == b.body);
  auto p = req("POST", "/campaigns/c4/propose", {{"request_id", "p1"}});
  p.query["wait"] = "1";
  const auto first = service.handle(p);
  const auto again = service.handle(p);
  CHECK(first.body == again.body);
  CHECK(service.handle(req("GET", "/campaigns/c4")).body["next_batch"] == 0);
  CHECK(service.handle(req("GET", "/campaigns/c4")).body["status"] == "awaiting_results");
}

TEST_CASE("bearer token is enforced") {
  CampaignService service({fresh_dir("token"), "s3cret"});
  CHECK(service.handle(req("GET", "/health")).status == 401);
  auto ok = req("GET", "/health");
  ok.headers["authorization"] = "Bearer s3cret";
  CHECK(service.handle(ok).status == 200);
}

TEST_CASE("infeasible proposals surface as 422") {
  CampaignService service({fresh_dir("infeasible"), ""});
  auto j = testcfg::relaxation();
  j["strategy"] = "run1";
  service.handle(req("POST", "/campaigns", {{"id", "c5"}, {"config", j}}));
  auto p = req("POST", "/campaigns/c5/propose");
  p.query["wait"] = "true";
  const auto r = service.handle(p);
  CHECK(r.status == 422);
  CHECK(r.body["error"]["kind"] == "AllStartsInfeasible");
  CHECK(r.body["status"] == "failed");
}

TEST_CASE("HTTP server round trip") {
  CampaignService service({fresh_dir("http"), ""});
  std::thread server([&] { service.serve("127.0.0.1", 0); });
  for (int i = 0; i < 200 && (!service.is_running() || service.bound_port() == 0); ++i) {
    std::this_thread::sleep_for(std::chrono::milliseconds(10));
  }
  REQUIRE(service.is_running());
  httplib::Client client("127.0.0.1", service.bound_port());
  auto health = client.Get("/health");
  REQUIRE(health);
  CHECK(health->status == 200);
  const nlohmann::json body{{"id", "h1"}, {"config", testcfg::quick("run4", 4)}};
  auto created = client.Post("/campaigns", body.dump(), "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  auto fetched = client.Get("/campaigns/h1");
  REQUIRE(fetched);
  CHECK(nlohmann::json::parse(fetched->body)["id"] == "h1");
  auto proposed = client.Post("/campaigns/h1/propose?wait=true", "", "application/json");
  REQUIRE(proposed);
  CHECK(proposed->status == 200);
  service.stop();
  server.join();
}
