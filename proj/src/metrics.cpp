#include "mixbo/metrics.hpp"

#include <cmath>

#include "mixbo/error.hpp"

namespace mixbo {

std::string_view to_string(Metric m) {
  switch (m) {
    case Metric::Mfr: return "mfr";
    case Metric::YoungsModulus: return "youngs_modulus";
    case Metric::ImpactStrength: return "impact_strength";
  }
  return "mfr";
}

Metric metric_from_string(std::string_view name) {
  if (name == "mfr") return Metric::Mfr;
  if (name == "youngs_modulus") return Metric::YoungsModulus;
  if (name == "impact_strength") return Metric::ImpactStrength;
  throw Error(ErrorKind::InvalidArgument, "unknown metric: " + std::string(name));
}

double QualityMetrics::get(Metric m) const {
  switch (m) {
    case Metric::Mfr: return mfr;
    case Metric::YoungsModulus: return youngs_modulus;
    case Metric::ImpactStrength: return impact_strength;
  }
  return mfr;
}

double& QualityMetrics::get(Metric m) {
  switch (m) {
    case Metric::Mfr: return mfr;
    case Metric::YoungsModulus: return youngs_modulus;
    case Metric::ImpactStrength: return impact_strength;
  }
  return mfr;
}

void QualityMetrics::validate() const {
  for (Metric m : kAllMetrics) {
    const double v = get(m);
    if (!std::isfinite(v) || v <= 0.0) {
      throw Error(ErrorKind::NonPositiveMetric,
                  std::string(to_string(m)) + " must be finite and positive",
                  {{"metric", to_string(m)}, {"value", std::isfinite(v) ? nlohmann::json(v) : nlohmann::json()}});
    }
  }
}

}  // namespace mixbo
