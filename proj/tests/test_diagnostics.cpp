#include <doctest.h>

#include <algorithm>
#include <random>

#include "mixbo/diagnostics.hpp"
#include "mixbo/error.hpp"
#include "test_configs.hpp"

using namespace mixbo;

namespace {

Experiment row(double youngs, double impact) {
  Experiment e;
  e.recipe = {0.5, 0.3, 0.1, 0.1};
  e.measured = QualityMetrics{10.0, youngs, impact};
  return e;
}

bool starts_with(const std::string& s, const std::string& p) { return s.rfind(p, 0) == 0; }

}  // namespace

TEST_CASE("training audit counts constraint hits") {
  const auto constraints = ProblemSpec{}.output_constraints();
  std::vector<Experiment> rows{row(1600, 5), row(1400, 9), row(1000, 8), row(1700, 2)};
  auto audit = audit_training_data(rows, constraints);
  CHECK(audit.rows == 4);
  CHECK(audit.per_constraint[0].count == 2);
  CHECK(audit.per_constraint[1].count == 2);
  CHECK(audit.joint_feasible == 0);
  REQUIRE(audit.warnings.size() == 1);
  CHECK(starts_with(audit.warnings[0], "InfeasibleLikely"));

  rows.push_back(row(1500, 8));
  audit = audit_training_data(rows, constraints);
  CHECK(audit.joint_feasible == 1);
  CHECK(audit.warnings.empty());

  const auto none = audit_training_data(rows, {});
  CHECK(none.per_constraint.empty());
  CHECK(none.warnings.empty());
}

TEST_CASE("boundary fraction counts recipes touching a bound") {
  const DomainSpec domain;
  std::vector<MixtureRecipe> recipes{
      {0.5, 0.3, 0.1, 0.1},           // interior
      {0.6, 0.2, 0.2, 0.0},           // modifier at 0
      {0.4, 0.3, 0.3, 0.0},           // filler at its bound
      {0.45, 0.3, 0.1, 0.15},         // interior
      {0.4, 0.3, 0.29985, 0.00015},   // within 1e-3 of both bounds
  };
  CHECK(boundary_fraction(recipes, domain) == doctest::Approx(3.0 / 5.0));
  std::mt19937_64 rng(1);
  for (int t = 0; t < 5; ++t) {
    std::shuffle(recipes.begin(), recipes.end(), rng);
    CHECK(boundary_fraction(recipes, domain) == doctest::Approx(3.0 / 5.0));
  }
  // Filler 0.29985 is 5e-4 below its bound in scaled space, 0.2994 is 2e-3.
  CHECK(boundary_fraction({{0.4, 0.25015, 0.29985, 0.05}}, domain, 1e-3) == 1.0);
  CHECK(boundary_fraction({{0.4, 0.2506, 0.2994, 0.05}}, domain, 1e-3) == 0.0);
  CHECK_THROWS_AS(boundary_fraction({}, domain), Error);
}

TEST_CASE("campaign diagnostics report dimension, audit and warnings") {
  auto j = testcfg::quick("run1", 3);
  j["historical"] = {{"source", "scarce_synthetic"}, {"count", 12}, {"impact_feasible", 2}, {"seed", 3}};
  auto state = create_campaign(CampaignConfig::from_json(j));
  const auto report = diagnose_campaign(state);
  CHECK(report.dimension == 11);
  CHECK(report.training_rows == 12);
  CHECK(report.training.joint_feasible == 0);
  CHECK(report.training.per_constraint[1].count == 2);
  CHECK_FALSE(report.boundary_fraction.has_value());
  const auto has = [&](const std::string& p) {
    return std::any_of(report.warnings.begin(), report.warnings.end(),
                       [&](const std::string& w) { return starts_with(w, p); });
  };
  CHECK(has("InfeasibleLikely"));
  CHECK(has("HighDimensional"));
  const auto out = report.to_json();
  CHECK(out["schema"] == "diagnostics_v1");
  CHECK(out["dimension"] == 11);
}

TEST_CASE("comparison table orders rows by label") {
  CampaignSummary a, b, c;
  a.label = "zeta";
  b.label = "alpha";
  b.feasible_count = 3;
  b.best_mfr_distance = 0.25;
  c.label = "mid";
  const auto table = compare_runs({a, b, c});
  REQUIRE(table.rows.size() == 3);
  CHECK(table.rows[0].label == "alpha");
  CHECK(table.rows[2].label == "zeta");
  const auto j = table.to_json();
  CHECK(j["rows"][0]["feasible_count"] == 3);
  const auto text = table.to_text();
  CHECK(text.find("alpha") < text.find("mid"));
  CHECK(text.find("0.25") != std::string::npos);
}
