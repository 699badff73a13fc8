#include "mixbo/problem.hpp"

#include "mixbo/error.hpp"

namespace mixbo {

void ProblemSpec::validate() const {
  if (!(mfr_target > 0.0 && youngs_min > 0.0 && impact_min > 0.0 && corridor_half_width > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "problem targets and thresholds must be positive");
  }
  if (!(corridor_half_width < mfr_target)) {
    throw Error(ErrorKind::InvalidArgument, "corridor half width must be below the MFR target");
  }
}

std::vector<ConstraintSpec> ProblemSpec::output_constraints(int youngs_level, int impact_level) const {
  return {ConstraintSpec::at_least(Metric::YoungsModulus, youngs_min, youngs_level),
          ConstraintSpec::at_least(Metric::ImpactStrength, impact_min, impact_level)};
}

nlohmann::json ProblemSpec::to_json() const {
  return {{"mfr_target", mfr_target},
          {"youngs_min", youngs_min},
          {"impact_min", impact_min},
          {"corridor_half_width", corridor_half_width}};
}

ProblemSpec ProblemSpec::from_json(const nlohmann::json& j) {
  ProblemSpec p;
  p.mfr_target = j.value("mfr_target", p.mfr_target);
  p.youngs_min = j.value("youngs_min", p.youngs_min);
  p.impact_min = j.value("impact_min", p.impact_min);
  p.corridor_half_width = j.value("corridor_half_width", p.corridor_half_width);
  p.validate();
  return p;
}

}  // namespace mixbo
