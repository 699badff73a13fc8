#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "mixbo/acquisition.hpp"
#include "mixbo/acquisition_optimizer.hpp"
#include "mixbo/experiment.hpp"
#include "mixbo/gp.hpp"
#include "mixbo/mixture.hpp"
#include "mixbo/oracle.hpp"
#include "mixbo/problem.hpp"

namespace mixbo {

enum class Strategy { Run1Vanilla, Run2Relaxation, Run3Reformulated, Run4Simplified };
enum class CampaignStatus { AwaitingResults, ReadyToPropose, Complete };

std::string_view to_string(Strategy s);
Strategy strategy_from_string(std::string_view s);
std::string_view to_string(CampaignStatus s);

/// Where run1-3 take their prior data from. `scarce_synthetic` draws it
/// from the campaign oracle at creation time.
struct HistoricalDataConfig {
  enum class Source { None, Csv, ScarceSynthetic };
  Source source = Source::None;
  std::string path;
  int count = 30;
  int impact_feasible = 2;
  std::uint64_t seed = 1;

  nlohmann::json to_json() const;
  static HistoricalDataConfig from_json(const nlohmann::json& j);
};

struct CampaignConfig {
  std::string label = "campaign";
  Strategy strategy = Strategy::Run4Simplified;
  std::uint64_t seed = 0;
  std::vector<int> schedule{10, 7, 8};
  ProblemSpec problem;
  DomainSpec domain;
  // Unset: augmented for run1-3, plain_4d for run4.
  std::optional<FeatureMapKind> feature_map;
  // Unset: false for run1-3 (hyperparameters frozen after the first fit),
  // true for run4.
  std::optional<bool> refit_each_batch;
  // Run 3 final batch: maximize impact strength, or minimize the MFR distance.
  bool run3_final_mfr_distance = false;
  int max_relaxation_level = 9;
  HistoricalDataConfig historical;
  std::optional<nlohmann::json> oracle;
  OptimizerOptions optimizer;
  int mc_samples = 128;
  gp::FitOptions fit;

  FeatureMapKind effective_feature_map() const;
  bool effective_refit() const;
  DomainSpec model_domain() const { return domain.with_feature_map(effective_feature_map()); }
  int total_experiments() const;

  void validate() const;
  nlohmann::json to_json() const;
  static CampaignConfig from_json(const nlohmann::json& j);
};

/// Hyperparameters and output scaling of the three metric models, frozen for
/// strategies that do not refit.
struct FrozenModels {
  std::array<gp::KernelHyperparams, 3> hyperparams;
  std::array<gp::ScalingSpec, 3> scaling;

  nlohmann::json to_json() const;
  static FrozenModels from_json(const nlohmann::json& j);
};

/// Everything a campaign knows, rebuilt by replaying its event log.
struct CampaignState {
  CampaignConfig config;
  std::vector<Experiment> historical;
  std::vector<Experiment> history;
  std::array<int, 2> relaxation_level{0, 0};  // Young's modulus, impact strength
  int next_batch = 0;
  CampaignStatus status = CampaignStatus::ReadyToPropose;
  std::optional<FrozenModels> frozen;
  std::vector<nlohmann::json> events;

  std::vector<const Experiment*> open_batch() const;
  std::vector<Experiment> completed_campaign_experiments() const;
  int batches() const { return static_cast<int>(config.schedule.size()); }

  nlohmann::json to_json() const;
};

/// Materializes historical data and emits the `created` event.
CampaignState create_campaign(const CampaignConfig& config);
CampaignState create_campaign(const CampaignConfig& config, const OracleSpec* oracle);

/// The only state-mutation path; proposal, recording and replay all go
/// through it.
void apply_event(CampaignState& state, const nlohmann::json& event);
CampaignState replay(const std::vector<nlohmann::json>& events);

/// Event log as JSON lines.
std::string event_log(const CampaignState& state);
std::vector<nlohmann::json> parse_event_log(std::string_view text);

/// Strategy-dispatched proposal of the next batch.
CampaignState propose_batch(const CampaignState& state);

using ResultEntry = std::pair<std::string, QualityMetrics>;
CampaignState record_results(const CampaignState& state, const std::vector<ResultEntry>& results);
CampaignState evaluate_with_oracle(const CampaignState& state, const OracleSpec& oracle);

/// Proposes and evaluates until the schedule is exhausted. On error the
/// partially advanced state is left in `state` and the error rethrown.
void run_simulation(CampaignState& state, const OracleSpec& oracle);

/// Oracle described by the campaign config (synthetic default when absent).
OracleSpec campaign_oracle(const CampaignConfig& config);

/// Metric models the next proposal would use, conditioned on historical and
/// completed campaign data.
MetricModels build_models(const CampaignState& state);

struct BatchTrace {
  int batch = 0;
  int size = 0;
  int completed = 0;
  int feasible = 0;
  std::optional<double> best_mfr_distance;
  std::array<int, 2> relaxation_level{0, 0};
  std::vector<std::string> ids;
  std::vector<double> mfr;
  std::vector<double> youngs_modulus;
  std::vector<double> impact_strength;
};

struct CampaignSummary {
  std::string label;
  Strategy strategy = Strategy::Run4Simplified;
  CampaignStatus status = CampaignStatus::ReadyToPropose;
  int experiments = 0;
  int completed = 0;
  int feasible_count = 0;
  std::optional<double> best_mfr_distance;
  std::optional<double> best_mfr;
  std::string best_experiment;
  std::optional<double> boundary_fraction;  // over BO proposals
  std::array<int, 2> relaxation_level{0, 0};
  std::vector<BatchTrace> batches;

  nlohmann::json to_json() const;
  static CampaignSummary from_json(const nlohmann::json& j);
};

/// Feasibility is judged against the unrelaxed thresholds.
CampaignSummary campaign_summary(const CampaignState& state);

/// Long-format per-batch metric traces for plotting.
void write_plot_data_csv(std::ostream& out, const CampaignState& state);

}  // namespace mixbo
