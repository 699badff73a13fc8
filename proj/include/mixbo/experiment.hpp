#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "mixbo/metrics.hpp"
#include "mixbo/mixture.hpp"

namespace mixbo {

enum class Provenance { RandomInit, BoProposal, ManualEntry, Historical };

std::string_view to_string(Provenance p);
Provenance provenance_from_string(std::string_view s);

struct Experiment {
  std::string id;
  int batch_index = 0;
  MixtureRecipe recipe;
  std::optional<QualityMetrics> measured;
  Provenance provenance = Provenance::ManualEntry;

  bool completed() const { return measured.has_value(); }
};

nlohmann::json to_json(const QualityMetrics& m);
QualityMetrics metrics_from_json(const nlohmann::json& j);
nlohmann::json to_json(const Experiment& e);
Experiment experiment_from_json(const nlohmann::json& j);

/// Experiments CSV: id, batch, virgin_pp, recycled, filler, impact_modifier,
/// mfr_g_per_10min, youngs_mpa, impact_kj_per_m2, provenance. Metric cells
/// are empty for open experiments.
void write_experiments_csv(std::ostream& out, const std::vector<Experiment>& experiments);
std::vector<Experiment> read_experiments_csv(std::istream& in);
std::vector<Experiment> read_experiments_csv_file(const std::string& path);

}  // namespace mixbo
