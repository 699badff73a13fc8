#include "mixbo/acquisition.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <random>

#include "mixbo/error.hpp"

namespace mixbo {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

double log_mean_softplus(const Eigen::VectorXd& improvements, double temperature) {
  std::vector<double> logs(static_cast<std::size_t>(improvements.size()));
  for (Eigen::Index s = 0; s < improvements.size(); ++s) {
    logs[static_cast<std::size_t>(s)] = log_fatplus(improvements(s), temperature);
  }
  return log_sum_exp(logs) - std::log(static_cast<double>(improvements.size()));
}

}  // namespace

ObjectiveSpec ObjectiveSpec::minimize_squared_distance(double target, Metric metric) {
  return {Mode::MinimizeSquaredDistance, metric, target};
}

ObjectiveSpec ObjectiveSpec::maximize(Metric metric) { return {Mode::Maximize, metric, 0.0}; }

void ObjectiveSpec::validate() const {
  if (!std::isfinite(target)) throw Error(ErrorKind::InvalidArgument, "objective target must be finite");
}

nlohmann::json ObjectiveSpec::to_json() const {
  if (mode == Mode::Maximize) return {{"mode", "maximize"}, {"metric", to_string(metric)}};
  return {{"mode", "minimize_squared_distance"}, {"metric", to_string(metric)}, {"target", target}};
}

ObjectiveSpec ObjectiveSpec::from_json(const nlohmann::json& j) {
  const auto mode = j.at("mode").get<std::string>();
  const auto metric = metric_from_string(j.value("metric", std::string("mfr")));
  if (mode == "maximize") return maximize(metric);
  if (mode == "minimize_squared_distance") {
    return minimize_squared_distance(j.at("target").get<double>(), metric);
  }
  throw Error(ErrorKind::SchemaError, "unknown objective mode: " + mode);
}

ConstraintSpec ConstraintSpec::at_least(Metric metric, double threshold, int relaxation_level) {
  ConstraintSpec c;
  c.metric = metric;
  c.kind = Kind::AtLeast;
  c.threshold = threshold;
  c.relaxation_level = relaxation_level;
  return c;
}

ConstraintSpec ConstraintSpec::within_corridor(Metric metric, double center, double half_width) {
  ConstraintSpec c;
  c.metric = metric;
  c.kind = Kind::WithinCorridor;
  c.center = center;
  c.half_width = half_width;
  return c;
}

double ConstraintSpec::effective_threshold() const {
  if (kind != Kind::AtLeast) return center - half_width;
  return threshold * std::max(0.0, 1.0 - 0.1 * relaxation_level);
}

bool ConstraintSpec::satisfied_by(double value) const {
  if (kind == Kind::AtLeast) return value >= effective_threshold();
  return std::abs(value - center) <= half_width;
}

void ConstraintSpec::validate() const {
  if (relaxation_level < 0) throw Error(ErrorKind::InvalidArgument, "relaxation_level must be >= 0");
  if (kind == Kind::AtLeast && !std::isfinite(threshold)) {
    throw Error(ErrorKind::InvalidArgument, "constraint threshold must be finite");
  }
  if (kind == Kind::WithinCorridor && !(half_width > 0.0 && std::isfinite(center))) {
    throw Error(ErrorKind::InvalidArgument, "corridor half_width must be positive");
  }
}

nlohmann::json ConstraintSpec::to_json() const {
  if (kind == Kind::AtLeast) {
    return {{"metric", to_string(metric)}, {"kind", "at_least"}, {"threshold", threshold},
            {"relaxation_level", relaxation_level}};
  }
  return {{"metric", to_string(metric)}, {"kind", "within_corridor"}, {"center", center},
          {"half_width", half_width}};
}

ConstraintSpec ConstraintSpec::from_json(const nlohmann::json& j) {
  const auto metric = metric_from_string(j.at("metric").get<std::string>());
  const auto kind = j.at("kind").get<std::string>();
  ConstraintSpec c;
  if (kind == "at_least") {
    c = at_least(metric, j.at("threshold").get<double>(), j.value("relaxation_level", 0));
  } else if (kind == "within_corridor") {
    c = within_corridor(metric, j.at("center").get<double>(), j.at("half_width").get<double>());
  } else {
    throw Error(ErrorKind::SchemaError, "unknown constraint kind: " + kind);
  }
  c.validate();
  return c;
}

void AcquisitionSpec::validate() const {
  objective.validate();
  for (const auto& c : constraints) c.validate();
  if (mc_samples < 16) throw Error(ErrorKind::InvalidArgument, "mc_samples must be >= 16");
  if (!(smoothing_temperature > 0.0)) {
    throw Error(ErrorKind::InvalidArgument, "smoothing_temperature must be positive");
  }
}

double log_ei_analytic(double mean, double std, double incumbent) {
  if (!(std > 0.0)) return mean > incumbent ? std::log(mean - incumbent) : kLogZero;
  const double z = (mean - incumbent) / std;
  return std::max(kLogZero, normal::log_h(z) + std::log(std));
}

double log_fatplus(double x, double temperature) {
  const double t = x / temperature;
  const double lt = std::log(temperature);
  const double cauchy = kFatplusAlpha / (1.0 + t * t);
  if (t > 0.0) return lt + std::log(t + std::log1p(std::exp(-t)) + cauchy);
  if (t < -30.0) return lt + std::log(kFatplusAlpha) - std::log1p(t * t);
  return lt + std::log(std::log1p(std::exp(t)) + cauchy);
}

Eigen::MatrixXd base_normal_samples(std::uint64_t seed, std::uint64_t stream, int rows,
                                    int samples) {
  Eigen::MatrixXd z(rows, samples);
  std::vector<int> strata(static_cast<std::size_t>(samples));
  for (int r = 0; r < rows; ++r) {
    std::mt19937_64 rng(splitmix64(seed ^ splitmix64(stream * 0x100000001b3ULL + static_cast<std::uint64_t>(r))));
    std::iota(strata.begin(), strata.end(), 0);
    std::shuffle(strata.begin(), strata.end(), rng);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int s = 0; s < samples; ++s) {
      const double p = (strata[static_cast<std::size_t>(s)] + u(rng)) / samples;
      z(r, s) = normal::quantile(std::clamp(p, 1e-300, 1.0 - 1e-16));
    }
  }
  return z;
}

NoisyEiEstimator::NoisyEiEstimator(const gp::GpModel& objective_model,
                                   const Eigen::MatrixXd& observed_features,
                                   const ObjectiveSpec& objective, int mc_samples,
                                   std::uint64_t seed, double smoothing_temperature,
                                   const Eigen::VectorXd& observed_feasibility)
    : model_(objective_model),
      objective_(objective),
      samples_(mc_samples),
      seed_(seed),
      temperature_(smoothing_temperature) {
  if (observed_features.rows() == 0) {
    throw Error(ErrorKind::InvalidArgument, "noisy EI requires at least one observed point");
  }
  if (observed_features.cols() != model_.dimension()) {
    throw Error(ErrorKind::DimensionMismatch, "observed points do not match model dimension");
  }
  observed_scaled_ = model_.scaling.scale_inputs(observed_features);
  const auto& hp = model_.hyperparams;
  const auto lower = model_.cholesky_factor.triangularView<Eigen::Lower>();
  observed_solve_ = lower.solve(gp::kernel_matrix(hp, model_.train_inputs, observed_scaled_));
  const Eigen::VectorXd mean =
      gp::kernel_matrix(hp, observed_scaled_, model_.train_inputs) * model_.alpha;
  Eigen::MatrixXd cov = gp::kernel_matrix(hp, observed_scaled_, observed_scaled_) -
                        observed_solve_.transpose() * observed_solve_;
  cov = 0.5 * (cov + cov.transpose());
  double jitter = 0.0;
  observed_cholesky_ = gp::jittered_cholesky(cov, jitter);
  observed_base_ = base_normal_samples(seed_, 0, static_cast<int>(observed_scaled_.rows()), samples_);
  candidate_base_ = base_normal_samples(seed_, 1, kCachedCandidateRows, samples_);

  const Eigen::MatrixXd f = (observed_cholesky_.triangularView<Eigen::Lower>() * observed_base_).colwise() + mean;
  if (observed_feasibility.size() != 0 && observed_feasibility.size() != f.rows()) {
    throw Error(ErrorKind::DimensionMismatch, "one feasibility weight per observed point expected");
  }
  Eigen::MatrixXd u(f.rows(), f.cols());
  for (Eigen::Index i = 0; i < f.rows(); ++i) {
    for (Eigen::Index s = 0; s < f.cols(); ++s) u(i, s) = objective_.utility(model_.scaling.unscale_output(f(i, s)));
  }
  if (!u.allFinite()) throw Error(ErrorKind::NonFiniteSample, "non-finite incumbent sample");
  const double floor = u.minCoeff();
  incumbent_.resize(samples_);
  for (int s = 0; s < samples_; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index i = 0; i < f.rows(); ++i) {
      const double p = observed_feasibility.size() == 0 ? 1.0 : std::clamp(observed_feasibility(i), 0.0, 1.0);
      best = std::max(best, p * u(i, s) + (1.0 - p) * floor);
    }
    incumbent_(s) = best;
  }
}

Eigen::MatrixXd NoisyEiEstimator::candidate_samples(const Eigen::MatrixXd& candidates) const {
  if (candidates.cols() != model_.dimension()) {
    throw Error(ErrorKind::DimensionMismatch, "candidate batch does not match model dimension");
  }
  const auto& hp = model_.hyperparams;
  const Eigen::Index q = candidates.rows();
  const Eigen::MatrixXd xc = model_.scaling.scale_inputs(candidates);
  const Eigen::MatrixXd k_train = gp::kernel_matrix(hp, model_.train_inputs, xc);
  const Eigen::MatrixXd v = model_.cholesky_factor.triangularView<Eigen::Lower>().solve(k_train);
  const Eigen::VectorXd mean = k_train.transpose() * model_.alpha;
  // Cross covariance with observed points, then the conditional given them.
  const Eigen::MatrixXd cross =
      gp::kernel_matrix(hp, observed_scaled_, xc) - observed_solve_.transpose() * v;  // n_o x q
  const Eigen::MatrixXd w = observed_cholesky_.triangularView<Eigen::Lower>().solve(cross);
  Eigen::MatrixXd cond = gp::kernel_matrix(hp, xc, xc) - v.transpose() * v - w.transpose() * w;
  cond = 0.5 * (cond + cond.transpose());

  Eigen::MatrixXd chol;
  if (q == 1) {
    chol = Eigen::MatrixXd::Constant(1, 1, std::sqrt(std::max(0.0, cond(0, 0))));
  } else {
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cond);
    chol = eig.eigenvectors() * eig.eigenvalues().cwiseMax(0.0).cwiseSqrt().asDiagonal();
  }
  Eigen::MatrixXd f = w.transpose() * observed_base_;
  if (q <= candidate_base_.rows()) {
    f.noalias() += chol * candidate_base_.topRows(q);
  } else {
    f.noalias() += chol * base_normal_samples(seed_, 1, static_cast<int>(q), samples_);
  }
  f.colwise() += mean;
  if (!f.allFinite()) throw Error(ErrorKind::NonFiniteSample, "posterior sample is not finite");
  return f;
}

Eigen::VectorXd NoisyEiEstimator::improvements(const Eigen::MatrixXd& candidates) const {
  const Eigen::MatrixXd f = candidate_samples(candidates);
  Eigen::VectorXd out(samples_);
  for (int s = 0; s < samples_; ++s) {
    double best = -std::numeric_limits<double>::infinity();
    for (Eigen::Index j = 0; j < f.rows(); ++j) {
      best = std::max(best, objective_.utility(model_.scaling.unscale_output(f(j, s))));
    }
    out(s) = best - incumbent_(s);
  }
  return out;
}

double NoisyEiEstimator::log_value(const Eigen::MatrixXd& candidates) const {
  return log_mean_softplus(improvements(candidates), temperature_);
}

double log_nei_mc(const MetricModels& models, const Eigen::MatrixXd& candidate_batch,
                  const Eigen::MatrixXd& observed_inputs, const AcquisitionSpec& spec) {
  spec.validate();
  if (candidate_batch.rows() < 1) throw Error(ErrorKind::InvalidArgument, "empty candidate batch");
  const NoisyEiEstimator nei(models.at(spec.objective.metric), observed_inputs, spec.objective,
                             spec.mc_samples, spec.base_sample_seed, spec.smoothing_temperature,
                             observed_feasibility(models, observed_inputs, spec.constraints));
  return nei.log_value(candidate_batch);
}

Eigen::VectorXd observed_feasibility(const MetricModels& models, const Eigen::MatrixXd& observed,
                                     const std::vector<ConstraintSpec>& constraints) {
  Eigen::VectorXd p = Eigen::VectorXd::Ones(observed.rows());
  if (constraints.empty()) return p;
  for (Eigen::Index i = 0; i < observed.rows(); ++i) {
    p(i) = std::exp(log_prob_feasible(models, observed.row(i).transpose(), constraints));
  }
  return p;
}

std::vector<double> log_prob_feasible_terms(const MetricModels& models,
                                            const Eigen::VectorXd& point,
                                            const std::vector<ConstraintSpec>& constraints) {
  std::vector<double> out;
  out.reserve(constraints.size());
  for (const auto& c : constraints) {
    const auto& model = models.at(c.metric);
    const auto post = gp::predict(model, point.transpose(), false);
    const double mean = model.scaling.unscale_output(post.mean(0));
    const double sd = std::sqrt(model.scaling.unscale_variance(post.variance(0)));
    double term = 0.0;
    if (c.kind == ConstraintSpec::Kind::AtLeast) {
      const double tau = c.effective_threshold();
      if (sd > 0.0) {
        term = normal::log_cdf((mean - tau) / sd);
      } else {
        term = mean >= tau ? 0.0 : kLogZero;
      }
    } else {
      const double lo = c.center - c.half_width;
      const double hi = c.center + c.half_width;
      if (sd > 0.0) {
        term = normal::log_cdf_diff((lo - mean) / sd, (hi - mean) / sd);
      } else {
        term = (mean >= lo && mean <= hi) ? 0.0 : kLogZero;
      }
    }
    out.push_back(std::max(kLogZero, term));
  }
  return out;
}

double log_prob_feasible(const MetricModels& models, const Eigen::VectorXd& point,
                         const std::vector<ConstraintSpec>& constraints) {
  double total = 0.0;
  for (double t : log_prob_feasible_terms(models, point, constraints)) {
    if (t <= kLogZero) return kLogZero;
    total += t;
  }
  return std::max(kLogZero, total);
}

ConstrainedAcquisition::ConstrainedAcquisition(const MetricModels& models,
                                               const Eigen::MatrixXd& observed,
                                               const AcquisitionSpec& spec)
    : models_(models),
      spec_(spec),
      nei_((spec.validate(), models.at(spec.objective.metric)), observed, spec.objective,
           spec.mc_samples, spec.base_sample_seed, spec.smoothing_temperature,
           observed_feasibility(models, observed, spec.constraints)) {}

ConstrainedAcquisition::Terms ConstrainedAcquisition::evaluate(const Eigen::MatrixXd& batch) const {
  Terms t;
  t.objective = nei_.log_value(batch);
  t.log_pof.assign(spec_.constraints.size(), 0.0);
  const double q = static_cast<double>(batch.rows());
  bool infeasible = t.objective <= kLogZero;
  for (Eigen::Index j = 0; j < batch.rows(); ++j) {
    const auto terms = log_prob_feasible_terms(models_, batch.row(j).transpose(), spec_.constraints);
    for (std::size_t c = 0; c < terms.size(); ++c) {
      if (terms[c] <= kLogZero) infeasible = true;
      t.log_pof[c] += terms[c] / q;
    }
  }
  if (infeasible) {
    t.total = kLogZero;
    return t;
  }
  t.total = t.objective;
  for (double v : t.log_pof) t.total += v;
  t.total = std::max(kLogZero, t.total);
  return t;
}

double constrained_acquisition(const MetricModels& models, const Eigen::MatrixXd& batch,
                               const Eigen::MatrixXd& observed, const AcquisitionSpec& spec) {
  return ConstrainedAcquisition(models, observed, spec)(batch);
}

nlohmann::json acquisition_trace(const Eigen::VectorXd& point,
                                 const ConstrainedAcquisition::Terms& terms,
                                 const std::vector<ConstraintSpec>& constraints) {
  nlohmann::json pof = nlohmann::json::object();
  for (std::size_t c = 0; c < constraints.size(); ++c) {
    pof[std::string(to_string(constraints[c].metric))] = terms.log_pof[c];
  }
  return {{"point", std::vector<double>(point.data(), point.data() + point.size())},
          {"objective_term", terms.objective},
          {"log_pof", pof},
          {"total", terms.total}};
}

}  // namespace mixbo
