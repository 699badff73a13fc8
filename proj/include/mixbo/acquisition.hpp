#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mixbo/gp.hpp"
#include "mixbo/metrics.hpp"
#include "mixbo/normal.hpp"

namespace mixbo {

/// One GP per quality metric, indexed by Metric. Outputs are modelled as
/// independent.
struct MetricModels {
  std::array<gp::GpModel, 3> models;

  const gp::GpModel& at(Metric m) const { return models[static_cast<int>(m)]; }
  gp::GpModel& at(Metric m) { return models[static_cast<int>(m)]; }
  int dimension() const { return models[0].dimension(); }
};

/// What the campaign optimizes, always expressed as a utility to maximize.
struct ObjectiveSpec {
  enum class Mode { MinimizeSquaredDistance, Maximize };

  Mode mode = Mode::MinimizeSquaredDistance;
  Metric metric = Metric::Mfr;
  double target = 10.0;

  static ObjectiveSpec minimize_squared_distance(double target, Metric metric = Metric::Mfr);
  static ObjectiveSpec maximize(Metric metric);

  // Raw metric value -> utility.
  double utility(double value) const {
    if (mode == Mode::Maximize) return value;
    const double r = value - target;
    return -r * r;
  }
  void validate() const;
  nlohmann::json to_json() const;
  static ObjectiveSpec from_json(const nlohmann::json& j);
};

struct ConstraintSpec {
  enum class Kind { AtLeast, WithinCorridor };

  Metric metric = Metric::YoungsModulus;
  Kind kind = Kind::AtLeast;
  double threshold = 0.0;   // AtLeast
  double center = 0.0;      // WithinCorridor
  double half_width = 0.0;  // WithinCorridor
  int relaxation_level = 0;

  static ConstraintSpec at_least(Metric metric, double threshold, int relaxation_level = 0);
  static ConstraintSpec within_corridor(Metric metric, double center, double half_width);

  /// threshold * (1 - 0.1 * level) for AtLeast; corridors do not relax.
  double effective_threshold() const;
  bool satisfied_by(double value) const;
  void validate() const;
  nlohmann::json to_json() const;
  static ConstraintSpec from_json(const nlohmann::json& j);
};

struct AcquisitionSpec {
  ObjectiveSpec objective;
  std::vector<ConstraintSpec> constraints;
  int mc_samples = 128;
  std::uint64_t base_sample_seed = 0;
  double smoothing_temperature = 1e-3;

  void validate() const;
};

/// log E[max(f - incumbent, 0)] for f ~ N(mean, std^2). Returns kLogZero
/// when std = 0 and mean <= incumbent.
double log_ei_analytic(double mean, double std, double incumbent);

inline constexpr double kFatplusAlpha = 0.1;

/// log(tau * (softplus(x / tau) + alpha / (1 + (x / tau)^2))). The Cauchy
/// term gives polynomial rather than exponential decay for x < 0.
double log_fatplus(double x, double temperature);

/// Standard-normal base samples, one row per point. Rows are stratified
/// (Latin hypercube in probability space) and depend only on the seed, the
/// stream and the row index, so adding points never reshuffles earlier rows.
Eigen::MatrixXd base_normal_samples(std::uint64_t seed, std::uint64_t stream, int rows,
                                    int samples);

/// Monte-Carlo noisy expected improvement with the observed points' joint
/// posterior cached. Samples over observed points are fixed at
/// construction; candidate samples are drawn conditionally on them, which is
/// the same as sampling the joint posterior over observed and candidates.
class NoisyEiEstimator {
 public:
  /// `observed_feasibility` (empty: all ones) weights each observed point's
  /// utility toward the lowest sampled utility, so the per-sample incumbent
  /// only counts points that are likely feasible.
  NoisyEiEstimator(const gp::GpModel& objective_model, const Eigen::MatrixXd& observed_features,
                   const ObjectiveSpec& objective, int mc_samples, std::uint64_t seed,
                   double smoothing_temperature,
                   const Eigen::VectorXd& observed_feasibility = Eigen::VectorXd());

  /// log of the smoothed MC estimate for a q x d candidate batch.
  double log_value(const Eigen::MatrixXd& candidate_features) const;
  /// Per-sample improvements (utility units) before smoothing.
  Eigen::VectorXd improvements(const Eigen::MatrixXd& candidate_features) const;

  int samples() const { return samples_; }

  static constexpr int kCachedCandidateRows = 16;

 private:
  Eigen::MatrixXd candidate_samples(const Eigen::MatrixXd& candidate_features) const;

  const gp::GpModel& model_;
  ObjectiveSpec objective_;
  int samples_;
  std::uint64_t seed_;
  double temperature_;
  Eigen::MatrixXd observed_scaled_;
  Eigen::MatrixXd observed_solve_;     // L_train^{-1} k(X_train, X_obs)
  Eigen::MatrixXd observed_cholesky_;  // of the observed posterior covariance
  Eigen::MatrixXd observed_base_;      // n_obs x S
  Eigen::MatrixXd candidate_base_;     // first kCachedCandidateRows rows of stream 1
  Eigen::VectorXd incumbent_;          // per-sample best observed utility
};

/// Joint probability of feasibility at each observed row (all ones without
/// constraints).
Eigen::VectorXd observed_feasibility(const MetricModels& models, const Eigen::MatrixXd& observed,
                                     const std::vector<ConstraintSpec>& constraints);

double log_nei_mc(const MetricModels& models, const Eigen::MatrixXd& candidate_batch,
                  const Eigen::MatrixXd& observed_inputs, const AcquisitionSpec& spec);

/// Per-constraint log probability of feasibility at one point.
std::vector<double> log_prob_feasible_terms(const MetricModels& models,
                                            const Eigen::VectorXd& point,
                                            const std::vector<ConstraintSpec>& constraints);
double log_prob_feasible(const MetricModels& models, const Eigen::VectorXd& point,
                         const std::vector<ConstraintSpec>& constraints);

/// Log-space product of noisy EI and feasibility; the feasibility term for
/// q > 1 is the mean over batch members of the per-point log-PoF.
double constrained_acquisition(const MetricModels& models, const Eigen::MatrixXd& batch,
                               const Eigen::MatrixXd& observed, const AcquisitionSpec& spec);

/// Reusable evaluator for optimizer loops: caches the noisy-EI context.
class ConstrainedAcquisition {
 public:
  ConstrainedAcquisition(const MetricModels& models, const Eigen::MatrixXd& observed,
                         const AcquisitionSpec& spec);

  struct Terms {
    double objective = kLogZero;
    std::vector<double> log_pof;  // per constraint, averaged over the batch
    double total = kLogZero;
  };

  Terms evaluate(const Eigen::MatrixXd& batch) const;
  double operator()(const Eigen::MatrixXd& batch) const { return evaluate(batch).total; }
  const AcquisitionSpec& spec() const { return spec_; }

 private:
  const MetricModels& models_;
  AcquisitionSpec spec_;
  NoisyEiEstimator nei_;
};

/// One JSON-lines trace record for the diagnostics module.
nlohmann::json acquisition_trace(const Eigen::VectorXd& point,
                                 const ConstrainedAcquisition::Terms& terms,
                                 const std::vector<ConstraintSpec>& constraints);

}  // namespace mixbo
