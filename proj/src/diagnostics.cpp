#include "mixbo/diagnostics.hpp"

#include <algorithm>
#include <iomanip>
#include <sstream>

#include "mixbo/error.hpp"

namespace mixbo {

namespace {

nlohmann::json optional_json(const std::optional<double>& v) {
  return v ? nlohmann::json(*v) : nlohmann::json(nullptr);
}

std::string fixed(const std::optional<double>& v, int precision) {
  if (!v) return "-";
  std::ostringstream os;
  os << std::fixed << std::setprecision(precision) << *v;
  return os.str();
}

}  // namespace

nlohmann::json TrainingAudit::to_json() const {
  nlohmann::json per = nlohmann::json::object();
  for (const auto& c : per_constraint) per[c.metric] = c.count;
  return {{"rows", rows}, {"per_constraint", per}, {"joint_feasible", joint_feasible}, {"warnings", warnings}};
}

TrainingAudit audit_training_data(const std::vector<Experiment>& rows,
                                  const std::vector<ConstraintSpec>& constraints) {
  TrainingAudit audit;
  if (constraints.empty()) return audit;
  audit.per_constraint.resize(constraints.size());
  for (std::size_t c = 0; c < constraints.size(); ++c) {
    audit.per_constraint[c].metric = std::string(to_string(constraints[c].metric));
  }
  for (const auto& row : rows) {
    if (!row.completed()) continue;
    ++audit.rows;
    bool all = true;
    for (std::size_t c = 0; c < constraints.size(); ++c) {
      const bool ok = constraints[c].satisfied_by(row.measured->get(constraints[c].metric));
      if (ok) ++audit.per_constraint[c].count;
      all = all && ok;
    }
    if (all) ++audit.joint_feasible;
  }
  if (audit.joint_feasible == 0) {
    audit.warnings.push_back("InfeasibleLikely: no training row meets every constraint at once");
  }
  return audit;
}

double boundary_fraction(const std::vector<MixtureRecipe>& proposals, const DomainSpec& domain,
                         double threshold) {
  if (proposals.empty()) throw Error(ErrorKind::InvalidArgument, "boundary_fraction needs proposals");
  int near = 0;
  for (const auto& r : proposals) {
    const Fractions s = domain.scaled(r.fractions());
    if ((s.array() <= threshold).any() || (s.array() >= 1.0 - threshold).any()) ++near;
  }
  return static_cast<double>(near) / static_cast<double>(proposals.size());
}

nlohmann::json DiagnosticsReport::to_json() const {
  nlohmann::json j{{"schema", "diagnostics_v1"},
                   {"boundary_fraction", optional_json(boundary_fraction)},
                   {"proposals", proposals},
                   {"feasible_training_count", training.to_json()},
                   {"joint_feasible_count", training.joint_feasible},
                   {"dimension", dimension},
                   {"training_rows", training_rows},
                   {"relaxation_level", relaxation_level},
                   {"warnings", warnings}};
  if (validation) {
    nlohmann::json rmse = nlohmann::json::object();
    for (Metric m : kAllMetrics) rmse[std::string(to_string(m))] = validation->rmse[static_cast<int>(m)];
    j["validation_rmse"] = rmse;
  } else {
    j["validation_rmse"] = nullptr;
  }
  return j;
}

DiagnosticsReport diagnose_campaign(const CampaignState& state,
                                    const std::optional<ValidationReport>& validation) {
  DiagnosticsReport report;
  const auto& cfg = state.config;
  std::vector<MixtureRecipe> proposals;
  for (const auto& e : state.history) {
    if (e.provenance == Provenance::BoProposal) proposals.push_back(e.recipe);
  }
  report.proposals = static_cast<int>(proposals.size());
  if (!proposals.empty()) report.boundary_fraction = boundary_fraction(proposals, cfg.domain);

  std::vector<Experiment> rows;
  if (cfg.strategy != Strategy::Run4Simplified) rows = state.historical;
  for (const auto& e : state.history) {
    if (e.completed()) rows.push_back(e);
  }
  report.training = audit_training_data(rows, cfg.problem.output_constraints());
  report.training_rows = report.training.rows;
  report.dimension = cfg.effective_feature_map() == FeatureMapKind::Plain4d ? 4 : 11;
  report.relaxation_level = state.relaxation_level;
  report.validation = validation;
  report.warnings = report.training.warnings;
  if (report.training_rows > 0 && report.training_rows < 10 * report.dimension) {
    report.warnings.push_back("HighDimensional: " + std::to_string(report.training_rows) +
                              " training rows for " + std::to_string(report.dimension) +
                              " features (fewer than 10 per feature)");
  }
  if (report.boundary_fraction && *report.boundary_fraction > 0.5) {
    report.warnings.push_back("BoundaryOversampling: more than half of the proposals lie on the domain boundary");
  }
  return report;
}

nlohmann::json ComparisonTable::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& r : rows) {
    out.push_back({{"label", r.label},
                   {"strategy", r.strategy},
                   {"experiments", r.experiments},
                   {"feasible_count", r.feasible_count},
                   {"best_mfr_distance", optional_json(r.best_mfr_distance)},
                   {"boundary_fraction", optional_json(r.boundary_fraction)}});
  }
  return {{"rows", out}};
}

std::string ComparisonTable::to_text() const {
  const std::vector<std::string> header{"label", "strategy", "experiments", "feasible", "best |MFR-target|",
                                        "boundary"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows) {
    cells.push_back({r.label, r.strategy, std::to_string(r.experiments), std::to_string(r.feasible_count),
                     fixed(r.best_mfr_distance, 3), fixed(r.boundary_fraction, 3)});
  }
  std::vector<std::size_t> width(header.size());
  for (std::size_t c = 0; c < header.size(); ++c) {
    width[c] = header[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  std::ostringstream os;
  const auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c > 0) os << "  ";
      if (c < 2) {
        os << std::left << std::setw(static_cast<int>(width[c])) << row[c];
      } else {
        os << std::right << std::setw(static_cast<int>(width[c])) << row[c];
      }
    }
    os << '\n';
  };
  line(header);
  std::vector<std::string> rule;
  for (auto w : width) rule.emplace_back(w, '-');
  line(rule);
  for (const auto& row : cells) line(row);
  return os.str();
}

ComparisonTable compare_runs(const std::vector<CampaignSummary>& summaries) {
  ComparisonTable table;
  for (const auto& s : summaries) {
    table.rows.push_back({s.label, std::string(to_string(s.strategy)), s.completed, s.feasible_count,
                          s.best_mfr_distance, s.boundary_fraction});
  }
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const ComparisonRow& a, const ComparisonRow& b) { return a.label < b.label; });
  return table;
}

}  // namespace mixbo
