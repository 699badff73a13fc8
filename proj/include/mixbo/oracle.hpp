#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include <json.hpp>

#include "mixbo/acquisition.hpp"
#include "mixbo/experiment.hpp"
#include "mixbo/gp.hpp"
#include "mixbo/mixture.hpp"
#include "mixbo/problem.hpp"

namespace mixbo {

/// Coefficients of the shipped synthetic response surfaces. With polymer
/// share s = recycled / (virgin + recycled):
///   MFR    = exp((1-s) ln mfr_virgin + s ln mfr_recycled
///                - mfr_filler_rate f - mfr_modifier_rate m)
///   Young  = ((1-s) youngs_virgin + s youngs_recycled)
///            (1 + youngs_filler_gain f) exp(-youngs_modifier_rate m)
///   Impact = (1-s) impact_virgin + s impact_recycled
///            + impact_modifier_gain exp(-impact_filler_rate f)
///              / (1 + exp(-(m - impact_transition + impact_filler_synergy f)
///                         / impact_transition_width))
/// The impact term is a brittle-to-tough transition in modifier content.
struct SyntheticParams {
  double mfr_virgin = 9.0;
  double mfr_recycled = 36.0;
  double mfr_filler_rate = 2.4;
  double mfr_modifier_rate = 3.2;
  double youngs_virgin = 1450.0;
  double youngs_recycled = 950.0;
  double youngs_filler_gain = 4.0;
  double youngs_modifier_rate = 2.3;
  double impact_virgin = 2.5;
  double impact_recycled = 4.0;
  double impact_modifier_gain = 10.0;
  double impact_transition = 0.14;
  double impact_transition_width = 0.015;
  double impact_filler_synergy = 0.1;
  double impact_filler_rate = 1.8;

  QualityMetrics evaluate(const Fractions& x) const;

  nlohmann::json to_json() const;
  static SyntheticParams from_json(const nlohmann::json& j);
};

struct LandscapeAudit {
  double feasible_fraction = 0.0;
  double youngs_impact_correlation = 0.0;
  int samples = 0;
};

/// Dense-sampling audit of a landscape over the domain (memoized per
/// parameter set, domain and sample count).
LandscapeAudit audit_landscape(const SyntheticParams& params, const DomainSpec& domain,
                               const ProblemSpec& problem, int samples = 1'000'000,
                               std::uint64_t seed = 20240917);

struct OracleSpec {
  enum class Kind { Synthetic, DataTrained };

  Kind kind = Kind::Synthetic;
  SyntheticParams synthetic;
  // Data-trained oracles: per-metric models over `domain`'s feature map.
  std::shared_ptr<const MetricModels> models;
  DomainSpec domain;
  std::string dataset;
  std::array<double, 3> noise_std{0.0, 0.0, 0.0};
  std::uint64_t seed = 0;

  nlohmann::json to_json() const;
  /// Data-trained specs without stored models are fitted from `dataset`.
  static OracleSpec from_json(const nlohmann::json& j);
};

/// Synthetic oracle; throws InvalidArgument unless at least 0.1 % of dense
/// domain samples meet both output constraints and the Young's/impact
/// correlation is negative.
OracleSpec make_synthetic_oracle(const SyntheticParams& params = {}, const DomainSpec& domain = {},
                                 const ProblemSpec& problem = {});

/// Metrics at `recipe`. Noise, when configured, is seeded by (oracle seed,
/// experiment id) so repeated queries for one experiment agree.
QualityMetrics query(const OracleSpec& oracle, const MixtureRecipe& recipe,
                     std::string_view experiment_id = {});

struct ValidationPoint {
  int index = 0;
  double truth = 0.0;
  double predicted = 0.0;
  double predictive_std = 0.0;
};

struct ValidationReport {
  std::string method;  // "loo" or "holdout"
  double train_fraction = 1.0;
  std::array<double, 3> rmse{};
  std::array<double, 3> range{};
  std::array<std::vector<ValidationPoint>, 3> points;

  nlohmann::json to_json() const;
};

struct ValidationSpec {
  enum class Method { Loo, Holdout };
  Method method = Method::Holdout;
  double train_fraction = 0.85;
};

struct DataOracle {
  OracleSpec oracle;
  ValidationReport report;
};

/// Fits one GP per metric on completed rows (at least 5) and validates them.
DataOracle build_data_oracle(const std::vector<Experiment>& rows, const DomainSpec& domain,
                             const ValidationSpec& validation = {},
                             const gp::FitOptions& fit_options = {});

/// Historical stand-in data drawn from an oracle: `count` rows, none jointly
/// feasible and exactly `impact_feasible` meeting the impact bound. The bulk
/// stays at low impact-modifier content, mimicking a record dominated by
/// stiff, brittle compounds.
std::vector<Experiment> scarce_feasible_dataset(const OracleSpec& oracle, const DomainSpec& domain,
                                                const ProblemSpec& problem, int count,
                                                int impact_feasible, std::uint64_t seed);

}  // namespace mixbo
