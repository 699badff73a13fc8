#include <doctest.h>

#include <cmath>
#include <random>

#include "mixbo/acquisition.hpp"
#include "mixbo/error.hpp"
#include "mixbo/normal.hpp"
#include "oracles.hpp"

using namespace mixbo;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

// Prior-only model: mean `mean`, standard deviation `sd` everywhere.
gp::GpModel flat_model(int d, double mean, double sd) {
  gp::KernelHyperparams hp;
  hp.lengthscales = VectorXd::Constant(d, 0.5);
  auto scaling = gp::ScalingSpec::unit_box(d);
  scaling.output_mean = mean;
  scaling.output_std = sd;
  return gp::condition(hp, scaling, MatrixXd(0, d), VectorXd(0));
}

MetricModels flat_models(double mfr, double youngs, double youngs_sd, double impact,
                         double impact_sd) {
  MetricModels m;
  m.at(Metric::Mfr) = flat_model(2, mfr, 1.0);
  m.at(Metric::YoungsModulus) = flat_model(2, youngs, youngs_sd);
  m.at(Metric::ImpactStrength) = flat_model(2, impact, impact_sd);
  return m;
}

MetricModels fitted_models(std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  MatrixXd x = MatrixXd::NullaryExpr(12, 2, [&] { return unit(rng); });
  MetricModels m;
  for (Metric metric : kAllMetrics) {
    VectorXd y(12);
    for (int i = 0; i < 12; ++i) {
      const double a = x(i, 0), b = x(i, 1);
      y(i) = metric == Metric::Mfr ? 10 + 6 * (a - b)
             : metric == Metric::YoungsModulus ? 1400 + 300 * a
                                                : 6 + 4 * b;
    }
    gp::FitOptions fo;
    fo.seed = seed;
    fo.restarts = 2;
    m.at(metric) = gp::fit(x, y, gp::ScalingSpec::unit_box(2), fo);
  }
  return m;
}

}  // namespace

TEST_CASE("analytic log-EI agrees with a 1e7-sample Monte-Carlo estimate") {
  const double cases[][3] = {{0.0, 1.0, 0.0},  {1.0, 1.0, 0.0},   {-1.0, 2.0, 0.5},
                             {3.0, 0.5, 1.0},  {-2.0, 1.0, 0.0},  {0.2, 0.1, 0.0},
                             {5.0, 3.0, -1.0}, {-4.0, 1.0, 0.0},  {10.0, 0.5, 12.0},
                             {-8.0, 1.0, 0.0}};
  std::uint64_t seed = 100;
  for (const auto& c : cases) {
    const auto mc = oracle::mc_expected_improvement(c[0], c[1], c[2], 10'000'000, seed++);
    const double ei = std::exp(log_ei_analytic(c[0], c[1], c[2]));
    CAPTURE(c[0]);
    CAPTURE(c[1]);
    CAPTURE(c[2]);
    CHECK(std::abs(ei - mc.mean) <= 3.0 * mc.std_error);
  }
}

TEST_CASE("log-EI stays finite far into the tail") {
  for (double z : {-10.0, -40.0, -200.0, -1e4}) {
    const double v = log_ei_analytic(z, 1.0, 0.0);
    CHECK(std::isfinite(v));
    CHECK(v > kLogZero);
  }
  CHECK(log_ei_analytic(-50.0, 1.0, 0.0) < log_ei_analytic(-40.0, 1.0, 0.0));
  CHECK(log_ei_analytic(2.0, 0.0, 1.0) == doctest::Approx(0.0));
  CHECK(log_ei_analytic(0.5, 0.0, 1.0) == kLogZero);
}

TEST_CASE("fat softplus is monotone and approaches x for large x") {
  const double tau = 1e-3;
  double prev = -1e300;
  for (double x = -1.0; x <= 1.0; x += 1e-4) {
    const double v = log_fatplus(x, tau);
    CHECK(v >= prev);
    prev = v;
  }
  CHECK(log_fatplus(0.5, tau) == doctest::Approx(std::log(0.5)).epsilon(1e-6));
  CHECK(log_fatplus(0.0, tau) == doctest::Approx(std::log(tau * (std::log(2.0) + kFatplusAlpha))));
  CHECK(log_fatplus(-1e6, tau) > -60.0);
}

TEST_CASE("probability of feasibility at analytic cases") {
  const auto models = flat_models(10.0, 1500.0, 100.0, 8.0, 2.0);
  const VectorXd p = VectorXd::Constant(2, 0.5);
  const auto at_threshold = ConstraintSpec::at_least(Metric::YoungsModulus, 1500.0);
  CHECK(std::abs(log_prob_feasible(models, p, {at_threshold}) - std::log(0.5)) < 1e-12);

  const auto m2 = flat_models(10.0, 1600.0, 100.0, 8.0, 2.0);
  const auto youngs = ConstraintSpec::at_least(Metric::YoungsModulus, 1500.0);
  const auto impact = ConstraintSpec::at_least(Metric::ImpactStrength, 6.0);
  const double expected = 2.0 * std::log(0.5 * std::erfc(-1.0 / std::sqrt(2.0)));
  CHECK(std::abs(log_prob_feasible(m2, p, {youngs, impact}) - expected) < 1e-12);
  const auto terms = log_prob_feasible_terms(m2, p, {youngs, impact});
  CHECK(std::abs(terms[0] + terms[1] - log_prob_feasible(m2, p, {youngs, impact})) < 1e-12);
  CHECK(log_prob_feasible(m2, p, {}) == 0.0);
}

TEST_CASE("relaxation lowers lower-bound thresholds by ten percent per level") {
  const auto c = ConstraintSpec::at_least(Metric::YoungsModulus, 1500.0, 3);
  CHECK(c.effective_threshold() == doctest::Approx(1050.0));
  const auto models = flat_models(10.0, 1500.0, 100.0, 8.0, 2.0);
  const VectorXd p = VectorXd::Constant(2, 0.5);
  double prev = -1e300;
  for (int level = 0; level < 10; ++level) {
    const double v = log_prob_feasible(models, p, {ConstraintSpec::at_least(Metric::YoungsModulus, 1500.0, level)});
    CHECK(v >= prev);
    prev = v;
  }
  const auto corridor = ConstraintSpec::within_corridor(Metric::Mfr, 10.0, 5.0);
  CHECK(corridor.satisfied_by(15.0));
  CHECK_FALSE(corridor.satisfied_by(15.01));
}

TEST_CASE("base samples are reproducible and prefix stable") {
  const MatrixXd a = base_normal_samples(7, 1, 3, 64);
  const MatrixXd b = base_normal_samples(7, 1, 5, 64);
  CHECK(a == b.topRows(3));
  CHECK(a != base_normal_samples(8, 1, 3, 64));
  // Each row is stratified: exactly one sample per probability bin.
  for (Eigen::Index r = 0; r < a.rows(); ++r) {
    std::vector<int> bins(64, 0);
    for (Eigen::Index s = 0; s < a.cols(); ++s) {
      ++bins[static_cast<int>(normal::cdf(a(r, s)) * 64)];
    }
    for (int c : bins) CHECK(c == 1);
  }
}

TEST_CASE("noisy EI grows when candidates are added to a batch") {
  const auto models = fitted_models(3);
  const auto& model = models.at(Metric::Mfr);
  NoisyEiEstimator nei(model, model.raw_inputs, ObjectiveSpec::minimize_squared_distance(10.0),
                       128, 5, 1e-3);
  MatrixXd batch(3, 2);
  batch << 0.2, 0.8, 0.5, 0.5, 0.9, 0.1;
  double prev = -1e300;
  for (int q = 1; q <= 3; ++q) {
    const double v = nei.log_value(batch.topRows(q));
    CHECK(std::isfinite(v));
    CHECK(v >= prev - 1e-12);
    prev = v;
  }
  CHECK(nei.log_value(batch) == nei.log_value(batch));
}

TEST_CASE("noisy EI at an observed noiseless point is small") {
  const auto models = fitted_models(4);
  const auto& model = models.at(Metric::ImpactStrength);
  NoisyEiEstimator nei(model, model.raw_inputs, ObjectiveSpec::maximize(Metric::ImpactStrength),
                       128, 1, 1e-3);
  Eigen::Index best;
  model.raw_targets.maxCoeff(&best);
  const double at_best = nei.log_value(model.raw_inputs.row(best));
  MatrixXd far(1, 2);
  far << 0.5, 1.5;
  CHECK(at_best < nei.log_value(far));
}

TEST_CASE("feasibility weighting ignores infeasible observed points") {
  const auto models = fitted_models(5);
  const auto& model = models.at(Metric::Mfr);
  const auto objective = ObjectiveSpec::minimize_squared_distance(10.0);
  const MatrixXd& obs = model.raw_inputs;
  NoisyEiEstimator plain(model, obs, objective, 64, 2, 1e-3);
  NoisyEiEstimator none_feasible(model, obs, objective, 64, 2, 1e-3,
                                 VectorXd::Zero(obs.rows()));
  MatrixXd x(1, 2);
  x << 0.3, 0.3;
  // With no feasible incumbent every sample's incumbent is the floor, so
  // improvements can only be larger.
  CHECK((none_feasible.improvements(x).array() >= plain.improvements(x).array() - 1e-12).all());
  const VectorXd ones = observed_feasibility(models, obs, {});
  CHECK(ones.isOnes());
}

TEST_CASE("constrained acquisition adds the log probability of feasibility") {
  const auto models = fitted_models(6);
  AcquisitionSpec spec;
  spec.objective = ObjectiveSpec::minimize_squared_distance(10.0);
  spec.constraints = {ConstraintSpec::at_least(Metric::YoungsModulus, 1500.0),
                      ConstraintSpec::at_least(Metric::ImpactStrength, 8.0)};
  spec.mc_samples = 64;
  const ConstrainedAcquisition acq(models, models.at(Metric::Mfr).raw_inputs, spec);
  MatrixXd x(1, 2);
  x << 0.6, 0.7;
  const auto t = acq.evaluate(x);
  CHECK(t.total == doctest::Approx(t.objective + t.log_pof[0] + t.log_pof[1]));
  CHECK(t.total == doctest::Approx(constrained_acquisition(models, x, models.at(Metric::Mfr).raw_inputs, spec)));
  const auto trace = acquisition_trace(x.row(0).transpose(), t, spec.constraints);
  CHECK(trace.contains("log_pof"));
}

TEST_CASE("acquisition spec validation") {
  AcquisitionSpec spec;
  spec.mc_samples = 4;
  CHECK_THROWS_AS(spec.validate(), Error);
  spec.mc_samples = 64;
  spec.smoothing_temperature = 0.0;
  CHECK_THROWS_AS(spec.validate(), Error);
  CHECK_THROWS_AS(ConstraintSpec::from_json({{"metric", "mfr"}, {"kind", "nope"}}), Error);
  const auto c = ConstraintSpec::within_corridor(Metric::Mfr, 10.0, 5.0);
  CHECK(ConstraintSpec::from_json(c.to_json()).half_width == 5.0);
}
