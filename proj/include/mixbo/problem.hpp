#pragma once

#include <vector>

#include <json.hpp>

#include "mixbo/acquisition.hpp"
#include "mixbo/metrics.hpp"

namespace mixbo {

/// Targets and output constraints of the compounding problem.
struct ProblemSpec {
  double mfr_target = 10.0;          // g/10 min
  double youngs_min = 1500.0;        // MPa
  double impact_min = 8.0;           // kJ/m^2
  double corridor_half_width = 5.0;  // g/10 min, reformulated final batch only

  void validate() const;

  ObjectiveSpec mfr_objective() const {
    return ObjectiveSpec::minimize_squared_distance(mfr_target, Metric::Mfr);
  }
  /// Young's and impact lower bounds at the given relaxation levels.
  std::vector<ConstraintSpec> output_constraints(int youngs_level = 0, int impact_level = 0) const;
  ConstraintSpec mfr_corridor() const {
    return ConstraintSpec::within_corridor(Metric::Mfr, mfr_target, corridor_half_width);
  }
  /// Feasibility against the unrelaxed thresholds.
  bool youngs_ok(const QualityMetrics& m) const { return m.youngs_modulus >= youngs_min; }
  bool impact_ok(const QualityMetrics& m) const { return m.impact_strength >= impact_min; }
  bool feasible(const QualityMetrics& m) const { return youngs_ok(m) && impact_ok(m); }

  nlohmann::json to_json() const;
  static ProblemSpec from_json(const nlohmann::json& j);
};

}  // namespace mixbo
