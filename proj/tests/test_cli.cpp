#include <doctest.h>

#include <array>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "mixbo/campaign.hpp"
#include "mixbo/service.hpp"
#include "test_configs.hpp"

using namespace mixbo;
namespace fs = std::filesystem;

namespace {

struct Run {
  int code = -1;
  std::string out;
  std::string err;
};

std::string slurp(const fs::path& p);

Run cli(const std::string& args) {
  const auto err = fs::temp_directory_path() / "mixbo-cli-stderr.txt";
  const std::string cmd = std::string(MIXBO_CLI) + " " + args + " 2>" + err.string();
  Run r;
  FILE* pipe = popen(cmd.c_str(), "r");
  REQUIRE(pipe != nullptr);
  std::array<char, 4096> buf{};
  std::size_t n;
  while ((n = fread(buf.data(), 1, buf.size(), pipe)) > 0) r.out.append(buf.data(), n);
  const int status = pclose(pipe);
  r.code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.err = slurp(err);
  return r;
}

fs::path workdir(const std::string& name) {
  const auto dir = fs::temp_directory_path() / ("mixbo-cli-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

std::string write(const fs::path& p, const std::string& text) {
  std::ofstream(p) << text;
  return p.string();
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream s;
  s << in.rdbuf();
  return s.str();
}

}  // namespace

TEST_CASE("simulate is byte-identical for a config and seed") {
  const auto dir = workdir("determinism");
  for (const std::string strategy : {"run1", "run2", "run3", "run4"}) {
    auto j = testcfg::quick(strategy, 5);
    if (strategy != "run4") {
      j["historical"] = {{"source", "scarce_synthetic"}, {"count", 12}, {"impact_feasible", 2}, {"seed", 5}};
    }
    const auto cfg = write(dir / (strategy + ".json"), j.dump());
    const auto a = dir / (strategy + "-a.jsonl"), b = dir / (strategy + "-b.jsonl");
    const auto ra = cli("--state-dir " + (dir / "st").string() + " simulate --config " + cfg + " --out " + a.string());
    const auto rb = cli("--state-dir " + (dir / "st").string() + " simulate --config " + cfg + " --out " + b.string());
    CAPTURE(strategy);
    CHECK(ra.code == rb.code);
    CHECK(ra.out == rb.out);
    CHECK_FALSE(slurp(a).empty());
    CHECK(slurp(a) == slurp(b));
  }
}

TEST_CASE("record with a partial batch exits conflict and leaves the log alone") {
  const auto dir = workdir("partial");
  const std::string sd = "--state-dir " + (dir / "st").string();
  const auto cfg = write(dir / "c.json", testcfg::quick("run4", 2).dump());
  REQUIRE(cli(sd + " init --config " + cfg + " --id p1").code == 0);
  const auto proposed = cli(sd + " propose --campaign p1");
  REQUIRE(proposed.code == 0);
  CHECK(proposed.out.rfind("id,batch,virgin_pp", 0) == 0);

  // Keep the header and the first two experiments only.
  std::istringstream lines(proposed.out);
  std::string line, partial;
  for (int i = 0; i < 3 && std::getline(lines, line); ++i) partial += line + "\n";
  auto filled = [](const std::string& csv) {
    std::istringstream in(csv);
    std::string l, out;
    std::getline(in, l);
    out = l + "\n";
    while (std::getline(in, l)) {
      // id,batch,v,r,f,m,mfr,youngs,impact,provenance
      std::vector<std::string> cells;
      std::stringstream ss(l);
      std::string c;
      while (std::getline(ss, c, ',')) cells.push_back(c);
      cells.resize(10);
      cells[6] = "10.5";
      cells[7] = "1600";
      cells[8] = "9";
      for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
      out += "\n";
    }
    return out;
  };
  const auto log = dir / "st" / "p1.events.jsonl";
  const auto before = slurp(log);
  const auto rp = write(dir / "partial.csv", filled(partial));
  const auto r = cli(sd + " record --campaign p1 --results " + rp);
  CHECK(r.code == 4);
  CHECK(r.err.find("IncompleteBatch") != std::string::npos);
  CHECK(slurp(log) == before);

  const auto full = write(dir / "full.csv", filled(proposed.out));
  CHECK(cli(sd + " record --campaign p1 --results " + full).code == 0);
  CHECK(slurp(log) != before);
  const auto again = cli(sd + " record --campaign p1 --results " + full);
  CHECK(again.code == 4);
}

TEST_CASE("run1 on unreachable thresholds exits infeasible") {
  const auto dir = workdir("infeasible");
  auto j = testcfg::relaxation();
  j["strategy"] = "run1";
  const auto cfg = write(dir / "c.json", j.dump());
  const auto out = dir / "log.jsonl";
  const auto r = cli("--state-dir " + (dir / "st").string() + " simulate --config " + cfg + " --out " + out.string());
  CHECK(r.code == 5);
  const auto env = nlohmann::json::parse(r.err);
  CHECK(env["error"]["code"] == "infeasible");
  CHECK(env["error"]["kind"] == "AllStartsInfeasible");
  CHECK(env["error"]["detail"].contains("best_pof_per_constraint"));
  CHECK(fs::exists(out));
}

TEST_CASE("bad invocations exit invalid_input") {
  const auto dir = workdir("bad");
  CHECK(cli("simulate --strategy run9").code == 2);
  CHECK(cli("frobnicate").code == 2);
  CHECK(cli("--state-dir " + dir.string() + " init --config " + write(dir / "broken.json", "{oops")).code == 2);
  const auto missing = cli("--state-dir " + dir.string() + " init --config " + (dir / "missing.json").string());
  CHECK(missing.code == 3);
  CHECK(nlohmann::json::parse(missing.err)["error"]["code"] == "not_found");
  CHECK(cli("--state-dir " + dir.string() + " summary --campaign ghost").code == 3);
}

TEST_CASE("CLI and HTTP summaries agree") {
  const auto dir = workdir("agree");
  const std::string sd = "--state-dir " + (dir / "st").string();
  const auto cfg = write(dir / "c.json", testcfg::quick("run4", 6).dump());
  const auto sim = cli(sd + " simulate --config " + cfg + " --id s1");
  REQUIRE(sim.code == 0);
  const auto from_cli = cli(sd + " summary --campaign s1");
  REQUIRE(from_cli.code == 0);
  CampaignService service({dir / "st", ""});
  HttpRequest get;
  get.method = "GET";
  get.path = "/campaigns/s1/summary";
  auto from_http = service.handle(get).body;
  from_http.erase("id");
  auto cli_json = nlohmann::json::parse(from_cli.out);
  cli_json.erase("id");
  CHECK(cli_json == from_http);
  CHECK(nlohmann::json::parse(sim.out)["feasible_count"] == from_http["feasible_count"]);
}

TEST_CASE("validate, diagnose, compare and plot export") {
  const auto dir = workdir("tools");
  const std::string sd = "--state-dir " + (dir / "st").string();
  auto j = testcfg::quick("run4", 7);
  j["schedule"] = {10, 3};
  const auto cfg = write(dir / "c.json", j.dump());
  REQUIRE(cli(sd + " simulate --config " + cfg + " --id t1").code == 0);
  REQUIRE(cli(sd + " simulate --config " + cfg + " --seed 8 --id t2").code == 0);

  const auto state = CampaignStore(dir / "st").load("t1");
  std::ofstream(dir / "data.csv") << [&] {
    std::ostringstream s;
    write_experiments_csv(s, state.history);
    return s.str();
  }();
  const auto v = cli("validate --data " + (dir / "data.csv").string() + " --method loo --out " + (dir / "oracle.json").string());
  REQUIRE(v.code == 0);
  CHECK(nlohmann::json::parse(v.out)["method"] == "loo");
  CHECK(nlohmann::json::parse(slurp(dir / "oracle.json"))["kind"] == "data_trained");

  const auto d = cli(sd + " diagnose --campaign t1");
  REQUIRE(d.code == 0);
  CHECK(nlohmann::json::parse(d.out)["schema"] == "diagnostics_v1");

  const auto c = cli(sd + " compare t2 t1 --json");
  REQUIRE(c.code == 0);
  const auto rows = nlohmann::json::parse(c.out)["rows"];
  CHECK(rows.size() == 2);
  CHECK(cli(sd + " compare t1 t2").out.find("feasible") != std::string::npos);

  const auto p = cli(sd + " export-plot-data --campaign t1");
  REQUIRE(p.code == 0);
  CHECK(p.out.rfind("campaign,strategy,batch", 0) == 0);
}
