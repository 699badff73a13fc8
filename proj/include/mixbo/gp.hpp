#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

namespace mixbo::gp {

using Eigen::MatrixXd;
using Eigen::VectorXd;

/// Affine map between raw units and the space the GP works in: inputs go to
/// the unit box spanned by [input_lower, input_upper], outputs are
/// standardized with (y - output_mean) / output_std.
struct ScalingSpec {
  VectorXd input_lower;
  VectorXd input_upper;
  double output_mean = 0.0;
  double output_std = 1.0;

  static ScalingSpec unit_box(int dimension);

  int dimension() const { return static_cast<int>(input_lower.size()); }
  void validate() const;

  MatrixXd scale_inputs(const MatrixXd& raw) const;
  MatrixXd unscale_inputs(const MatrixXd& scaled) const;
  double scale_output(double raw) const { return (raw - output_mean) / output_std; }
  double unscale_output(double standardized) const {
    return standardized * output_std + output_mean;
  }
  double unscale_variance(double standardized) const {
    return standardized * output_std * output_std;
  }
};

/// ARD squared-exponential kernel parameters, in the scaled input space.
struct KernelHyperparams {
  VectorXd lengthscales;
  double signal_variance = 1.0;
  double noise_variance = 1e-6;

  int dimension() const { return static_cast<int>(lengthscales.size()); }
  void validate() const;

  // (log lengthscales..., log signal variance, log noise variance)
  VectorXd to_log() const;
  static KernelHyperparams from_log(const VectorXd& log_params);
};

/// MAP prior over the hyperparameters. Lengthscales are log-normal with a
/// location that grows with log(sqrt(d)) so the prior median lengthscale
/// scales as sqrt(d); the signal variance gets a weak log-normal prior and
/// the noise variance a flat prior bounded below.
struct LengthscalePriorSpec {
  double location = 1.4142135623730951;  // sqrt(2), before the dimension shift
  double scale = 1.7320508075688772;     // sqrt(3)
  bool scale_with_dimension = true;
  double signal_log_mean = 0.0;
  double signal_log_std = 2.0;
  double min_noise_variance = 1e-6;
  double max_noise_variance = 1.0;

  double lengthscale_log_median(int dimension) const;
};

struct FitOptions {
  LengthscalePriorSpec prior;
  int restarts = 8;
  int max_iterations = 200;
  std::uint64_t seed = 0;
};

/// A single-output GP conditioned on data. Immutable once built.
struct GpModel {
  KernelHyperparams hyperparams;
  ScalingSpec scaling;
  MatrixXd raw_inputs;
  VectorXd raw_targets;
  MatrixXd train_inputs;   // scaled, one row per point
  VectorXd train_targets;  // standardized
  MatrixXd cholesky_factor;
  VectorXd alpha;
  double jitter = 0.0;
  double penalized_mll = 0.0;
  std::vector<std::string> warnings;

  int size() const { return static_cast<int>(train_inputs.rows()); }
  int dimension() const { return static_cast<int>(train_inputs.cols()); }
};

struct PosteriorGaussian {
  VectorXd mean;        // standardized
  MatrixXd covariance;  // filled for joint queries
  VectorXd variance;    // always filled (diagonal of the covariance)
  int clamped = 0;      // number of slightly negative variances set to zero
};

MatrixXd kernel_matrix(const KernelHyperparams& hp, const MatrixXd& a, const MatrixXd& b);

/// Cholesky factor of K + (noise + jitter) I using the jitter ladder
/// 0, 1e-8, 1e-6, 1e-4. Throws SingularKernel if every rung fails.
MatrixXd jittered_cholesky(const MatrixXd& covariance, double& jitter_used);

/// Builds a model with fixed hyperparameters from scaled/standardized data.
GpModel condition(const KernelHyperparams& hp, const ScalingSpec& scaling,
                  const MatrixXd& raw_inputs, const VectorXd& raw_targets);

/// Multi-start MAP fit. The output fields of `scaling` are recomputed from
/// the targets; a constant target vector keeps output_std = 1 and records a
/// DegenerateData warning.
GpModel fit(const MatrixXd& inputs, const VectorXd& targets, const ScalingSpec& scaling,
            const FitOptions& options = {});

/// Appends observations without touching hyperparameters or scaling.
GpModel condition_on(const GpModel& model, const MatrixXd& raw_inputs,
                     const VectorXd& raw_targets);

PosteriorGaussian predict(const GpModel& model, const MatrixXd& raw_queries, bool joint);
PosteriorGaussian predict_scaled(const GpModel& model, const MatrixXd& scaled_queries,
                                 bool joint);

struct MllValue {
  double value = 0.0;
  VectorXd gradient;  // with respect to KernelHyperparams::to_log()
};

/// Marginal log likelihood of standardized targets under hp, and its
/// gradient in log-parameter space.
MllValue log_marginal_likelihood(const MatrixXd& scaled_inputs, const VectorXd& targets,
                                 const KernelHyperparams& hp);
VectorXd mll_gradient(const MatrixXd& scaled_inputs, const VectorXd& targets,
                      const KernelHyperparams& hp);

/// log prior density of the log-parameters and its gradient.
MllValue log_prior(const KernelHyperparams& hp, const LengthscalePriorSpec& prior);

struct LooResult {
  VectorXd predictions;  // raw units, NaN for failed folds
  VectorXd variances;    // raw units
  std::vector<int> failed_folds;
  double rmse = 0.0;
};

LooResult loo_cv(const MatrixXd& inputs, const VectorXd& targets, const ScalingSpec& scaling,
                 const FitOptions& options = {});

nlohmann::json to_json(const KernelHyperparams& hp);
KernelHyperparams hyperparams_from_json(const nlohmann::json& j);
nlohmann::json to_json(const ScalingSpec& s);
ScalingSpec scaling_from_json(const nlohmann::json& j);
nlohmann::json to_json(const GpModel& model);
GpModel model_from_json(const nlohmann::json& j);

}  // namespace mixbo::gp
