#include "mixbo/gp.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "mixbo/error.hpp"

namespace mixbo::gp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;
constexpr double kLogLengthscaleMin = -6.907755278982137;  // log(1e-3)
constexpr double kLogLengthscaleMax = 9.210340371976184;   // log(1e4)
constexpr double kLogSignalMin = -9.210340371976184;
constexpr double kLogSignalMax = 9.210340371976184;

void require_dims(const MatrixXd& x, int d, const char* what) {
  if (x.cols() != d) {
    throw Error(ErrorKind::DimensionMismatch,
                std::string(what) + ": expected " + std::to_string(d) + " columns, got " +
                    std::to_string(x.cols()));
  }
}

struct Bounds {
  VectorXd lower;
  VectorXd upper;
};

Bounds log_bounds(int d, const LengthscalePriorSpec& prior) {
  Bounds b{VectorXd(d + 2), VectorXd(d + 2)};
  b.lower.head(d).setConstant(kLogLengthscaleMin);
  b.upper.head(d).setConstant(kLogLengthscaleMax);
  b.lower(d) = kLogSignalMin;
  b.upper(d) = kLogSignalMax;
  b.lower(d + 1) = std::log(prior.min_noise_variance);
  b.upper(d + 1) = std::log(prior.max_noise_variance);
  return b;
}

VectorXd clamp(const VectorXd& x, const Bounds& b) {
  return x.cwiseMax(b.lower).cwiseMin(b.upper);
}

struct Objective {
  const MatrixXd& inputs;
  const VectorXd& targets;
  const LengthscalePriorSpec& prior;

  // Penalized MLL; value = -inf when the kernel cannot be factorized.
  MllValue operator()(const VectorXd& log_params) const {
    const auto hp = KernelHyperparams::from_log(log_params);
    try {
      auto mll = log_marginal_likelihood(inputs, targets, hp);
      const auto lp = log_prior(hp, prior);
      mll.value += lp.value;
      mll.gradient += lp.gradient;
      if (!std::isfinite(mll.value) || !mll.gradient.allFinite()) {
        return {-std::numeric_limits<double>::infinity(), VectorXd::Zero(log_params.size())};
      }
      return mll;
    } catch (const Error&) {
      return {-std::numeric_limits<double>::infinity(), VectorXd::Zero(log_params.size())};
    }
  }
};

// Projected BFGS ascent with Armijo backtracking. Coordinates sitting on a
// bound with the gradient pointing outward are frozen for the iteration.
VectorXd maximize(const Objective& objective, VectorXd theta, const Bounds& bounds,
                  int max_iterations, double& best_value) {
  const int p = static_cast<int>(theta.size());
  theta = clamp(theta, bounds);
  MllValue current = objective(theta);
  if (!std::isfinite(current.value)) {
    best_value = current.value;
    return theta;
  }
  MatrixXd inverse_hessian = MatrixXd::Identity(p, p);
  int stalled = 0;

  for (int iter = 0; iter < max_iterations; ++iter) {
    VectorXd g = current.gradient;
    for (int i = 0; i < p; ++i) {
      const bool at_lower = theta(i) <= bounds.lower(i) + 1e-12 && g(i) < 0.0;
      const bool at_upper = theta(i) >= bounds.upper(i) - 1e-12 && g(i) > 0.0;
      if (at_lower || at_upper) g(i) = 0.0;
    }
    if (g.lpNorm<Eigen::Infinity>() < 1e-7) break;

    VectorXd direction = inverse_hessian * g;
    for (int i = 0; i < p; ++i) {
      if (g(i) == 0.0) direction(i) = 0.0;
    }
    if (direction.dot(g) <= 0.0) {
      inverse_hessian.setIdentity();
      direction = g;
    }
    // Keep trial steps within a sane trust radius in log space.
    const double longest = direction.lpNorm<Eigen::Infinity>();
    double step = longest > 2.0 ? 2.0 / longest : 1.0;

    bool accepted = false;
    VectorXd trial;
    MllValue trial_value;
    for (int ls = 0; ls < 40; ++ls) {
      trial = clamp(theta + step * direction, bounds);
      trial_value = objective(trial);
      if (std::isfinite(trial_value.value) &&
          trial_value.value >= current.value + 1e-4 * g.dot(trial - theta)) {
        accepted = true;
        break;
      }
      step *= 0.5;
    }
    if (!accepted) {
      if (!inverse_hessian.isIdentity()) {
        inverse_hessian.setIdentity();
        continue;
      }
      break;
    }

    const VectorXd s = trial - theta;
    // Minimization convention for the curvature pair.
    const VectorXd y = current.gradient - trial_value.gradient;
    const double sy = s.dot(y);
    const double improvement = trial_value.value - current.value;
    theta = trial;
    current = trial_value;
    if (sy > 1e-10) {
      const double rho = 1.0 / sy;
      const MatrixXd identity = MatrixXd::Identity(p, p);
      inverse_hessian = (identity - rho * s * y.transpose()) * inverse_hessian *
                            (identity - rho * y * s.transpose()) +
                        rho * s * s.transpose();
    }
    if (improvement < 1e-12 * (1.0 + std::abs(current.value))) {
      if (++stalled >= 3) break;
    } else {
      stalled = 0;
    }
  }
  best_value = current.value;
  return theta;
}

VectorXd standardize(const VectorXd& raw, const ScalingSpec& s) {
  return (raw.array() - s.output_mean) / s.output_std;
}

}  // namespace

ScalingSpec ScalingSpec::unit_box(int dimension) {
  return {VectorXd::Zero(dimension), VectorXd::Ones(dimension), 0.0, 1.0};
}

void ScalingSpec::validate() const {
  if (input_lower.size() != input_upper.size() || input_lower.size() == 0) {
    throw Error(ErrorKind::InvalidArgument, "scaling bounds must be non-empty and of equal length");
  }
  for (Eigen::Index d = 0; d < input_lower.size(); ++d) {
    if (!(input_lower(d) < input_upper(d))) {
      throw Error(ErrorKind::InvalidArgument,
                  "scaling lower bound must be below upper bound in feature " + std::to_string(d));
    }
  }
  if (!(output_std > 0.0)) throw Error(ErrorKind::InvalidArgument, "output_std must be positive");
}

MatrixXd ScalingSpec::scale_inputs(const MatrixXd& raw) const {
  require_dims(raw, dimension(), "scale_inputs");
  const Eigen::RowVectorXd span = (input_upper - input_lower).transpose();
  return (raw.rowwise() - input_lower.transpose()).array().rowwise() / span.array();
}

MatrixXd ScalingSpec::unscale_inputs(const MatrixXd& scaled) const {
  require_dims(scaled, dimension(), "unscale_inputs");
  const Eigen::RowVectorXd span = (input_upper - input_lower).transpose();
  MatrixXd out = scaled.array().rowwise() * span.array();
  return out.rowwise() + input_lower.transpose();
}

void KernelHyperparams::validate() const {
  if (lengthscales.size() == 0 || (lengthscales.array() <= 0.0).any() ||
      !lengthscales.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "lengthscales must be positive and finite");
  }
  if (!(signal_variance > 0.0) || !std::isfinite(signal_variance)) {
    throw Error(ErrorKind::InvalidArgument, "signal_variance must be positive");
  }
  if (!(noise_variance >= 0.0) || !std::isfinite(noise_variance)) {
    throw Error(ErrorKind::InvalidArgument, "noise_variance must be non-negative");
  }
}

VectorXd KernelHyperparams::to_log() const {
  const int d = dimension();
  VectorXd out(d + 2);
  out.head(d) = lengthscales.array().log();
  out(d) = std::log(signal_variance);
  out(d + 1) = std::log(noise_variance);
  return out;
}

KernelHyperparams KernelHyperparams::from_log(const VectorXd& log_params) {
  const int d = static_cast<int>(log_params.size()) - 2;
  KernelHyperparams hp;
  hp.lengthscales = log_params.head(d).array().exp();
  hp.signal_variance = std::exp(log_params(d));
  hp.noise_variance = std::exp(log_params(d + 1));
  return hp;
}

double LengthscalePriorSpec::lengthscale_log_median(int dimension) const {
  return location + (scale_with_dimension ? 0.5 * std::log(static_cast<double>(dimension)) : 0.0);
}

MatrixXd kernel_matrix(const KernelHyperparams& hp, const MatrixXd& a, const MatrixXd& b) {
  const Eigen::ArrayXd inv_ls = hp.lengthscales.array().inverse();
  const MatrixXd as = a.array().rowwise() * inv_ls.transpose();
  const MatrixXd bs = b.array().rowwise() * inv_ls.transpose();
  MatrixXd k(a.rows(), b.rows());
  for (Eigen::Index j = 0; j < b.rows(); ++j) {
    for (Eigen::Index i = 0; i < a.rows(); ++i) {
      k(i, j) = (as.row(i) - bs.row(j)).squaredNorm();
    }
  }
  return hp.signal_variance * (-0.5 * k.array()).exp();
}

MatrixXd jittered_cholesky(const MatrixXd& covariance, double& jitter_used) {
  static constexpr double kLadder[] = {0.0, 1e-8, 1e-6, 1e-4};
  const Eigen::Index n = covariance.rows();
  for (double jitter : kLadder) {
    Eigen::LLT<MatrixXd> llt(covariance + jitter * MatrixXd::Identity(n, n));
    if (llt.info() == Eigen::Success) {
      jitter_used = jitter;
      return llt.matrixL();
    }
  }
  throw Error(ErrorKind::SingularKernel, "Cholesky factorization failed after jitter 1e-4");
}

GpModel condition(const KernelHyperparams& hp, const ScalingSpec& scaling,
                  const MatrixXd& raw_inputs, const VectorXd& raw_targets) {
  hp.validate();
  scaling.validate();
  if (raw_inputs.rows() != raw_targets.size()) {
    throw Error(ErrorKind::DimensionMismatch, "inputs and targets differ in length");
  }
  if (hp.dimension() != scaling.dimension()) {
    throw Error(ErrorKind::DimensionMismatch, "hyperparameter and scaling dimensions differ");
  }
  GpModel m;
  m.hyperparams = hp;
  m.scaling = scaling;
  m.raw_inputs = raw_inputs;
  m.raw_targets = raw_targets;
  m.train_inputs = scaling.scale_inputs(raw_inputs);
  m.train_targets = standardize(raw_targets, scaling);
  const Eigen::Index n = raw_inputs.rows();
  MatrixXd k = kernel_matrix(hp, m.train_inputs, m.train_inputs);
  k.diagonal().array() += hp.noise_variance;
  m.cholesky_factor = jittered_cholesky(k, m.jitter);
  m.alpha = m.cholesky_factor.triangularView<Eigen::Lower>().solve(m.train_targets);
  m.cholesky_factor.triangularView<Eigen::Lower>().transpose().solveInPlace(m.alpha);
  if (n == 0) m.alpha.resize(0);
  return m;
}

MllValue log_marginal_likelihood(const MatrixXd& x, const VectorXd& y, const KernelHyperparams& hp) {
  const Eigen::Index n = x.rows();
  const int d = static_cast<int>(x.cols());
  const MatrixXd k_signal = kernel_matrix(hp, x, x);
  MatrixXd k = k_signal;
  k.diagonal().array() += hp.noise_variance;
  double jitter = 0.0;
  const MatrixXd l = jittered_cholesky(k, jitter);
  const auto lower = l.triangularView<Eigen::Lower>();
  VectorXd alpha = lower.solve(y);
  const double quad = alpha.squaredNorm();
  lower.transpose().solveInPlace(alpha);

  MllValue out;
  out.value = -0.5 * quad - l.diagonal().array().log().sum() - 0.5 * static_cast<double>(n) * kLog2Pi;

  MatrixXd k_inv = MatrixXd::Identity(n, n);
  lower.solveInPlace(k_inv);
  lower.transpose().solveInPlace(k_inv);
  const MatrixXd a = alpha * alpha.transpose() - k_inv;

  out.gradient.resize(d + 2);
  const MatrixXd ak = a.cwiseProduct(k_signal);
  for (int dim = 0; dim < d; ++dim) {
    const double inv_l2 = 1.0 / (hp.lengthscales(dim) * hp.lengthscales(dim));
    double acc = 0.0;
    for (Eigen::Index j = 0; j < n; ++j) {
      for (Eigen::Index i = 0; i < n; ++i) {
        const double diff = x(i, dim) - x(j, dim);
        acc += ak(i, j) * diff * diff;
      }
    }
    out.gradient(dim) = 0.5 * acc * inv_l2;
  }
  out.gradient(d) = 0.5 * ak.sum();
  out.gradient(d + 1) = 0.5 * hp.noise_variance * a.trace();
  return out;
}

VectorXd mll_gradient(const MatrixXd& scaled_inputs, const VectorXd& targets,
                      const KernelHyperparams& hp) {
  hp.validate();
  return log_marginal_likelihood(scaled_inputs, targets, hp).gradient;
}

MllValue log_prior(const KernelHyperparams& hp, const LengthscalePriorSpec& prior) {
  const int d = hp.dimension();
  const double mu = prior.lengthscale_log_median(d);
  const double s2 = prior.scale * prior.scale;
  MllValue out;
  out.gradient = VectorXd::Zero(d + 2);
  const VectorXd log_ls = hp.lengthscales.array().log();
  out.value = 0.0;
  for (int i = 0; i < d; ++i) {
    const double r = log_ls(i) - mu;
    out.value += -0.5 * r * r / s2 - std::log(prior.scale) - 0.5 * kLog2Pi;
    out.gradient(i) = -r / s2;
  }
  const double ss2 = prior.signal_log_std * prior.signal_log_std;
  const double r = std::log(hp.signal_variance) - prior.signal_log_mean;
  out.value += -0.5 * r * r / ss2 - std::log(prior.signal_log_std) - 0.5 * kLog2Pi;
  out.gradient(d) = -r / ss2;
  return out;
}

GpModel fit(const MatrixXd& inputs, const VectorXd& targets, const ScalingSpec& scaling_in,
            const FitOptions& options) {
  if (inputs.rows() < 2) throw Error(ErrorKind::InvalidArgument, "fit requires at least 2 points");
  if (inputs.rows() != targets.size()) {
    throw Error(ErrorKind::DimensionMismatch, "inputs and targets differ in length");
  }
  if (options.restarts < 1) throw Error(ErrorKind::InvalidArgument, "restarts must be >= 1");
  if (!inputs.allFinite() || !targets.allFinite()) {
    throw Error(ErrorKind::InvalidArgument, "fit data must be finite");
  }
  ScalingSpec scaling = scaling_in;
  require_dims(inputs, scaling.dimension(), "fit");
  const Eigen::Index n = targets.size();
  scaling.output_mean = targets.mean();
  const double var = (targets.array() - scaling.output_mean).square().sum() / static_cast<double>(n);
  std::vector<std::string> warnings;
  if (var <= 1e-24 * std::max(1.0, scaling.output_mean * scaling.output_mean)) {
    scaling.output_std = 1.0;
    warnings.emplace_back("DegenerateData: all targets identical; output_std set to 1");
  } else {
    scaling.output_std = std::sqrt(var);
  }
  scaling.validate();

  const int d = scaling.dimension();
  const MatrixXd x = scaling.scale_inputs(inputs);
  const VectorXd y = standardize(targets, scaling);
  const auto bounds = log_bounds(d, options.prior);
  const Objective objective{x, y, options.prior};

  std::mt19937_64 rng(options.seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  const double mu = options.prior.lengthscale_log_median(d);

  VectorXd best_theta;
  double best_value = -std::numeric_limits<double>::infinity();
  for (int r = 0; r < options.restarts; ++r) {
    VectorXd theta(d + 2);
    if (r == 0) {
      theta.head(d).setConstant(mu);
      theta(d) = 0.0;
      theta(d + 1) = std::log(1e-3);
    } else {
      for (int i = 0; i < d; ++i) theta(i) = mu + options.prior.scale * gauss(rng);
      theta(d) = gauss(rng);
      theta(d + 1) = bounds.lower(d + 1) + uniform(rng) * (std::log(1e-1) - bounds.lower(d + 1));
    }
    double value = 0.0;
    VectorXd optimum = maximize(objective, theta, bounds, options.max_iterations, value);
    if (value > best_value) {
      best_value = value;
      best_theta = optimum;
    }
  }
  if (!std::isfinite(best_value)) {
    throw Error(ErrorKind::SingularKernel, "no restart produced a factorizable kernel");
  }
  GpModel model = condition(KernelHyperparams::from_log(best_theta), scaling, inputs, targets);
  model.penalized_mll = best_value;
  model.warnings = std::move(warnings);
  return model;
}

GpModel condition_on(const GpModel& model, const MatrixXd& raw_inputs, const VectorXd& raw_targets) {
  require_dims(raw_inputs, model.dimension(), "condition_on");
  MatrixXd x(model.raw_inputs.rows() + raw_inputs.rows(), model.dimension());
  x << model.raw_inputs, raw_inputs;
  VectorXd y(model.raw_targets.size() + raw_targets.size());
  y << model.raw_targets, raw_targets;
  GpModel out = condition(model.hyperparams, model.scaling, x, y);
  out.warnings = model.warnings;
  return out;
}

PosteriorGaussian predict_scaled(const GpModel& model, const MatrixXd& xq, bool joint) {
  require_dims(xq, model.dimension(), "predict");
  const Eigen::Index m = xq.rows();
  PosteriorGaussian post;
  const MatrixXd k_cross = kernel_matrix(model.hyperparams, model.train_inputs, xq);  // n x m
  post.mean = k_cross.transpose() * model.alpha;
  const MatrixXd v = model.cholesky_factor.triangularView<Eigen::Lower>().solve(k_cross);
  if (joint) {
    post.covariance = kernel_matrix(model.hyperparams, xq, xq) - v.transpose() * v;
    post.covariance = 0.5 * (post.covariance + post.covariance.transpose());
    post.variance = post.covariance.diagonal();
  } else {
    post.variance = VectorXd::Constant(m, model.hyperparams.signal_variance) -
                    v.colwise().squaredNorm().transpose();
  }
  for (Eigen::Index i = 0; i < m; ++i) {
    if (post.variance(i) < 0.0) {
      post.variance(i) = 0.0;
      if (joint) post.covariance(i, i) = 0.0;
      ++post.clamped;
    }
  }
  return post;
}

PosteriorGaussian predict(const GpModel& model, const MatrixXd& raw_queries, bool joint) {
  require_dims(raw_queries, model.dimension(), "predict");
  return predict_scaled(model, model.scaling.scale_inputs(raw_queries), joint);
}

LooResult loo_cv(const MatrixXd& inputs, const VectorXd& targets, const ScalingSpec& scaling,
                 const FitOptions& options) {
  const Eigen::Index n = inputs.rows();
  if (n < 3) throw Error(ErrorKind::InvalidArgument, "loo_cv requires at least 3 points");
  if (targets.size() != n) throw Error(ErrorKind::DimensionMismatch, "inputs and targets differ");
  LooResult out;
  out.predictions = VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  out.variances = VectorXd::Constant(n, std::numeric_limits<double>::quiet_NaN());
  double sq = 0.0;
  int ok = 0;
  for (Eigen::Index fold = 0; fold < n; ++fold) {
    MatrixXd x(n - 1, inputs.cols());
    VectorXd y(n - 1);
    for (Eigen::Index i = 0, r = 0; i < n; ++i) {
      if (i == fold) continue;
      x.row(r) = inputs.row(i);
      y(r++) = targets(i);
    }
    try {
      const GpModel model = fit(x, y, scaling, options);
      const auto post = predict(model, inputs.row(fold), false);
      out.predictions(fold) = model.scaling.unscale_output(post.mean(0));
      out.variances(fold) = model.scaling.unscale_variance(post.variance(0));
      const double err = out.predictions(fold) - targets(fold);
      sq += err * err;
      ++ok;
    } catch (const Error&) {
      out.failed_folds.push_back(static_cast<int>(fold));
    }
  }
  out.rmse = ok > 0 ? std::sqrt(sq / ok) : std::numeric_limits<double>::quiet_NaN();
  return out;
}

namespace {

nlohmann::json vec_json(const VectorXd& v) { return std::vector<double>(v.data(), v.data() + v.size()); }

VectorXd json_vec(const nlohmann::json& j) {
  const auto values = j.get<std::vector<double>>();
  return Eigen::Map<const VectorXd>(values.data(), static_cast<Eigen::Index>(values.size()));
}

}  // namespace

nlohmann::json to_json(const KernelHyperparams& hp) {
  return {{"lengthscales", vec_json(hp.lengthscales)},
          {"signal_variance", hp.signal_variance},
          {"noise_variance", hp.noise_variance}};
}

KernelHyperparams hyperparams_from_json(const nlohmann::json& j) {
  KernelHyperparams hp;
  hp.lengthscales = json_vec(j.at("lengthscales"));
  hp.signal_variance = j.at("signal_variance").get<double>();
  hp.noise_variance = j.at("noise_variance").get<double>();
  hp.validate();
  return hp;
}

nlohmann::json to_json(const ScalingSpec& s) {
  return {{"input_lower", vec_json(s.input_lower)},
          {"input_upper", vec_json(s.input_upper)},
          {"output_mean", s.output_mean},
          {"output_std", s.output_std}};
}

ScalingSpec scaling_from_json(const nlohmann::json& j) {
  ScalingSpec s{json_vec(j.at("input_lower")), json_vec(j.at("input_upper")),
                j.at("output_mean").get<double>(), j.at("output_std").get<double>()};
  s.validate();
  return s;
}

nlohmann::json to_json(const GpModel& model) {
  nlohmann::json rows = nlohmann::json::array();
  for (Eigen::Index i = 0; i < model.raw_inputs.rows(); ++i) {
    rows.push_back(vec_json(model.raw_inputs.row(i).transpose()));
  }
  return {{"hyperparams", to_json(model.hyperparams)},
          {"scaling", to_json(model.scaling)},
          {"inputs", rows},
          {"targets", vec_json(model.raw_targets)},
          {"warnings", model.warnings}};
}

GpModel model_from_json(const nlohmann::json& j) {
  const auto hp = hyperparams_from_json(j.at("hyperparams"));
  const auto scaling = scaling_from_json(j.at("scaling"));
  const auto& rows = j.at("inputs");
  MatrixXd x(static_cast<Eigen::Index>(rows.size()), scaling.dimension());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    x.row(static_cast<Eigen::Index>(i)) = json_vec(rows[i]).transpose();
  }
  GpModel m = condition(hp, scaling, x, json_vec(j.at("targets")));
  if (j.contains("warnings")) m.warnings = j.at("warnings").get<std::vector<std::string>>();
  return m;
}

}  // namespace mixbo::gp
