#pragma once

#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mixbo/acquisition.hpp"
#include "mixbo/mixture.hpp"

namespace mixbo {

struct OptimizerOptions {
  int batch_size = 1;
  int starts = 64;
  // Dirichlet candidates scored before the best `starts` are refined.
  int raw_samples = 256;
  int iterations = 100;
  // Central-difference step, relative to each component's bound.
  double fd_step = 1e-4;
  std::uint64_t seed = 0;
};

struct FeasibilityReport {
  double best_log_pof = kLogZero;
  // Per constraint: the highest PoF seen over all start and end points.
  std::vector<double> best_pof;
};

struct BatchProposal {
  std::vector<MixtureRecipe> recipes;
  std::vector<Eigen::VectorXd> features;
  std::vector<double> acquisition_values;
  std::vector<double> best_start_values;
  std::vector<FeasibilityReport> feasibility;
  std::vector<nlohmann::json> traces;
};

/// log(1e-6): below this max per-start log-PoF the acquisition is declared
/// infeasible everywhere.
inline constexpr double kInfeasibleLogPof = -13.815510557964274;

/// Sequential-greedy batch maximization of the constrained acquisition over
/// the domain. Later members condition every metric model on the posterior
/// mean at earlier members (Kriging believer). The noisy-EI observed set is
/// the objective model's training inputs plus those fantasies.
///
/// Throws AllStartsInfeasible with per-constraint best PoF in the detail
/// payload when no start reaches PoF 1e-6.
BatchProposal optimize_acquisition(const MetricModels& models, const AcquisitionSpec& spec,
                                   const DomainSpec& domain, const OptimizerOptions& options);

}  // namespace mixbo
