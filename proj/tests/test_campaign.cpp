#include <doctest.h>

#include <cmath>
#include <limits>
#include <sstream>

#include "mixbo/campaign.hpp"
#include "mixbo/error.hpp"
#include "test_configs.hpp"

using namespace mixbo;

namespace {

ErrorKind kind_of(const std::function<void()>& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.kind();
  }
  FAIL("no error raised");
  return ErrorKind::Internal;
}

std::vector<ResultEntry> fake_results(const CampaignState& s) {
  std::vector<ResultEntry> out;
  for (const auto* e : s.open_batch()) out.emplace_back(e->id, QualityMetrics{10.0, 1600.0, 9.0});
  return out;
}

}  // namespace

TEST_CASE("config JSON round trip") {
  auto c = CampaignConfig::from_json(testcfg::quick("run3", 4));
  c.run3_final_mfr_distance = true;
  const auto back = CampaignConfig::from_json(c.to_json());
  CHECK(back.to_json() == c.to_json());
  CHECK(back.strategy == Strategy::Run3Reformulated);
  CHECK(back.effective_feature_map() == FeatureMapKind::Augmented);
  CHECK(CampaignConfig::from_json(testcfg::quick("run4", 1)).effective_refit());
  CHECK_THROWS_AS(CampaignConfig::from_json({{"strategy", "run9"}}), Error);
  CHECK_THROWS_AS(CampaignConfig::from_json({{"schedule", {3, 0}}}), Error);
  CHECK_THROWS_AS(CampaignConfig::from_json(nlohmann::json::array()), Error);
}

TEST_CASE("run4 simulation, replay and summary") {
  const auto config = CampaignConfig::from_json(testcfg::quick("run4", 3));
  auto state = create_campaign(config);
  run_simulation(state, campaign_oracle(config));
  REQUIRE(state.status == CampaignStatus::Complete);
  REQUIRE(state.history.size() == 7);

  SUBCASE("replay rebuilds identical state") {
    const auto again = replay(parse_event_log(event_log(state)));
    CHECK(again.to_json() == state.to_json());
    CHECK(event_log(again) == event_log(state));
  }
  SUBCASE("same seed gives the same log, another seed does not") {
    auto twin = create_campaign(config);
    run_simulation(twin, campaign_oracle(config));
    CHECK(event_log(twin) == event_log(state));
    auto other_config = config;
    other_config.seed = 4;
    auto other = create_campaign(other_config);
    run_simulation(other, campaign_oracle(other_config));
    CHECK(event_log(other) != event_log(state));
  }
  SUBCASE("provenance and ids") {
    for (const auto& e : state.history) {
      CHECK(e.provenance == (e.batch_index == 0 ? Provenance::RandomInit : Provenance::BoProposal));
    }
    CHECK(state.history.front().id == "B1-01");
    CHECK(state.history.back().id == "B2-03");
  }
  SUBCASE("summary arithmetic") {
    const auto summary = campaign_summary(state);
    const ProblemSpec problem;
    int feasible = 0;
    double best = std::numeric_limits<double>::infinity();
    for (const auto& e : state.history) {
      if (problem.feasible(*e.measured)) {
        ++feasible;
        best = std::min(best, std::abs(e.measured->mfr - 10.0));
      }
    }
    CHECK(summary.feasible_count == feasible);
    CHECK(summary.completed == 7);
    CHECK(summary.experiments == 7);
    if (feasible > 0) {
      CHECK(*summary.best_mfr_distance == doctest::Approx(best));
    } else {
      CHECK_FALSE(summary.best_mfr_distance.has_value());
    }
    REQUIRE(summary.batches.size() == 2);
    CHECK(summary.batches[0].size + summary.batches[1].size == 7);
    CHECK(CampaignSummary::from_json(summary.to_json()).to_json() == summary.to_json());
  }
  SUBCASE("plot data") {
    std::ostringstream out;
    write_plot_data_csv(out, state);
    const auto text = out.str();
    CHECK(text.rfind("campaign,strategy,batch,experiment,index,metric,value,threshold,feasible", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 1 + 7 * 3);
  }
  SUBCASE("a finished campaign refuses more work") {
    CHECK(kind_of([&] { propose_batch(state); }) == ErrorKind::InvalidState);
    CHECK(kind_of([&] { record_results(state, {}); }) == ErrorKind::InvalidState);
  }
}

TEST_CASE("record_results validation") {
  const auto config = CampaignConfig::from_json(testcfg::quick("run4", 5));
  const auto ready = create_campaign(config);
  CHECK(kind_of([&] { record_results(ready, {}); }) == ErrorKind::InvalidState);
  const auto open = propose_batch(ready);
  REQUIRE(open.status == CampaignStatus::AwaitingResults);
  auto good = fake_results(open);

  CHECK(kind_of([&] { record_results(open, {{"B9-01", {10, 1600, 9}}}); }) ==
        ErrorKind::UnknownExperiment);
  auto twice = good;
  twice.push_back(good.front());
  CHECK(kind_of([&] { record_results(open, twice); }) == ErrorKind::InvalidArgument);
  auto negative = good;
  negative[1].second.youngs_modulus = -3.0;
  CHECK(kind_of([&] { record_results(open, negative); }) == ErrorKind::NonPositiveMetric);
  auto partial = good;
  partial.pop_back();
  try {
    record_results(open, partial);
    FAIL("expected IncompleteBatch");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::IncompleteBatch);
    CHECK(e.detail()["missing"] == nlohmann::json::array({good.back().first}));
  }
  const auto next = record_results(open, good);
  CHECK(next.status == CampaignStatus::ReadyToPropose);
  CHECK(next.next_batch == 1);
  CHECK(open.events.size() + 1 == next.events.size());
}

TEST_CASE("event logs reject malformed input") {
  CHECK_THROWS_AS(parse_event_log("{\"event\":\"created\"\nnot json\n"), Error);
  CHECK_THROWS_AS(replay({}), Error);
  CHECK_THROWS_AS(replay({{{"event", "proposed"}}}), Error);
  const auto state = create_campaign(CampaignConfig::from_json(testcfg::quick("run4", 1)));
  auto events = state.events;
  events.push_back({{"event", "teleported"}});
  CHECK_THROWS_AS(replay(events), Error);
}

TEST_CASE("frozen hyperparameters are stored once for run1") {
  auto j = testcfg::quick("run1", 2);
  j["historical"] = {{"source", "scarce_synthetic"}, {"count", 12}, {"impact_feasible", 2}, {"seed", 2}};
  const auto config = CampaignConfig::from_json(j);
  auto state = create_campaign(config);
  CHECK(state.historical.size() == 12);
  for (const auto& e : state.historical) CHECK(e.provenance == Provenance::Historical);
  state = propose_batch(state);
  REQUIRE(state.frozen.has_value());
  CHECK(state.events.back().contains("models"));
  state = evaluate_with_oracle(state, campaign_oracle(config));
  const auto frozen = state.frozen->to_json();
  state = propose_batch(state);
  CHECK(state.frozen->to_json() == frozen);
  CHECK_FALSE(state.events.back().contains("models"));
}

TEST_CASE("run2 relaxes monotonically and reports against unrelaxed thresholds") {
  const auto config = CampaignConfig::from_json(testcfg::relaxation());
  auto state = create_campaign(config);
  try {
    run_simulation(state, campaign_oracle(config));
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::AllStartsInfeasible);
  }
  const auto check = testcfg::check_relaxation(state);
  CHECK(check.relaxed_events > 0);
  CHECK(check.monotone_within_batches);
  CHECK(check.final_batch_unrelaxed);
  CHECK(check.summary_uses_unrelaxed);
  CHECK(check.relaxed_only_rows > 0);
}

TEST_CASE("relaxation beyond the cap is exhausted") {
  auto j = testcfg::relaxation();
  j["max_relaxation_level"] = 0;
  const auto config = CampaignConfig::from_json(j);
  const auto state = create_campaign(config);
  CHECK(kind_of([&] { propose_batch(state); }) == ErrorKind::RelaxationExhausted);
}

TEST_CASE("run1 on impossible thresholds ends with the infeasible signature") {
  auto j = testcfg::relaxation();
  j["strategy"] = "run1";
  const auto config = CampaignConfig::from_json(j);
  auto state = create_campaign(config);
  CHECK(kind_of([&] { run_simulation(state, campaign_oracle(config)); }) ==
        ErrorKind::AllStartsInfeasible);
  CHECK(state.status == CampaignStatus::ReadyToPropose);
  CHECK(state.next_batch == 0);
}

TEST_CASE("run3 switches objective in the final batch") {
  auto j = testcfg::quick("run3", 6);
  j["historical"] = {{"source", "scarce_synthetic"}, {"count", 12}, {"impact_feasible", 2}, {"seed", 6}};
  const auto config = CampaignConfig::from_json(j);
  auto state = create_campaign(config);
  run_simulation(state, campaign_oracle(config));
  CHECK(state.status == CampaignStatus::Complete);
  CHECK(state.history.size() == 7);
}
