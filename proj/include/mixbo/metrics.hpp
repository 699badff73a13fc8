#pragma once

#include <array>
#include <string>
#include <string_view>

namespace mixbo {

enum class Metric { Mfr = 0, YoungsModulus = 1, ImpactStrength = 2 };

inline constexpr std::array<Metric, 3> kAllMetrics{Metric::Mfr, Metric::YoungsModulus,
                                                   Metric::ImpactStrength};

std::string_view to_string(Metric m);
Metric metric_from_string(std::string_view name);

// MFR in g/10 min, Young's modulus in MPa, impact strength in kJ/m^2.
struct QualityMetrics {
  double mfr = 0.0;
  double youngs_modulus = 0.0;
  double impact_strength = 0.0;

  double get(Metric m) const;
  double& get(Metric m);
  // Throws NonPositiveMetric unless every value is finite and positive.
  void validate() const;

  bool operator==(const QualityMetrics&) const = default;
};

}  // namespace mixbo
