#pragma once

#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixbo/acquisition.hpp"
#include "mixbo/campaign.hpp"
#include "mixbo/experiment.hpp"
#include "mixbo/mixture.hpp"
#include "mixbo/oracle.hpp"

namespace mixbo {

inline constexpr double kBoundaryThreshold = 1e-3;

struct ConstraintCount {
  std::string metric;
  int count = 0;
};

struct TrainingAudit {
  int rows = 0;
  std::vector<ConstraintCount> per_constraint;
  int joint_feasible = 0;
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;
};

/// Counts completed rows meeting each constraint and all of them at once;
/// warns InfeasibleLikely when no row is jointly feasible.
TrainingAudit audit_training_data(const std::vector<Experiment>& rows,
                                  const std::vector<ConstraintSpec>& constraints);

/// Share of recipes with some component within `threshold` of 0 or of its
/// upper bound, measured in x / upper.
double boundary_fraction(const std::vector<MixtureRecipe>& proposals, const DomainSpec& domain,
                         double threshold = kBoundaryThreshold);

struct DiagnosticsReport {
  std::optional<double> boundary_fraction;
  int proposals = 0;
  TrainingAudit training;
  int dimension = 0;
  int training_rows = 0;
  std::optional<ValidationReport> validation;
  std::array<int, 2> relaxation_level{0, 0};
  std::vector<std::string> warnings;

  nlohmann::json to_json() const;  // schema "diagnostics_v1"
};

/// Diagnostics of the data a campaign's next model would be trained on and
/// of the proposals made so far.
DiagnosticsReport diagnose_campaign(const CampaignState& state,
                                    const std::optional<ValidationReport>& validation = std::nullopt);

struct ComparisonRow {
  std::string label;
  std::string strategy;
  int experiments = 0;
  int feasible_count = 0;
  std::optional<double> best_mfr_distance;
  std::optional<double> boundary_fraction;
};

struct ComparisonTable {
  std::vector<ComparisonRow> rows;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Rows ordered by label (stable for equal labels).
ComparisonTable compare_runs(const std::vector<CampaignSummary>& summaries);

}  // namespace mixbo
