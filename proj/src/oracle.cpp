#include "mixbo/oracle.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <mutex>
#include <numeric>
#include <random>

#include "mixbo/error.hpp"

namespace mixbo {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::array<double, 3> noise_from_json(const nlohmann::json& j) {
  std::array<double, 3> out{0.0, 0.0, 0.0};
  if (!j.contains("noise_std")) return out;
  for (Metric m : kAllMetrics) {
    out[static_cast<int>(m)] = j.at("noise_std").value(std::string(to_string(m)), 0.0);
  }
  return out;
}

}  // namespace

QualityMetrics SyntheticParams::evaluate(const Fractions& x) const {
  const double v = x(0), r = x(1), f = x(2), m = x(3);
  const double polymer = v + r;
  const double s = polymer > 1e-12 ? r / polymer : 0.5;
  QualityMetrics out;
  out.mfr = std::exp((1.0 - s) * std::log(mfr_virgin) + s * std::log(mfr_recycled) -
                     mfr_filler_rate * f - mfr_modifier_rate * m);
  out.youngs_modulus = ((1.0 - s) * youngs_virgin + s * youngs_recycled) *
                       (1.0 + youngs_filler_gain * f) * std::exp(-youngs_modifier_rate * m);
  out.impact_strength = (1.0 - s) * impact_virgin + s * impact_recycled +
                        impact_modifier_gain * std::exp(-impact_filler_rate * f) /
                            (1.0 + std::exp(-(m - impact_transition + impact_filler_synergy * f) /
                                            impact_transition_width));
  return out;
}

nlohmann::json SyntheticParams::to_json() const {
  return {{"mfr_virgin", mfr_virgin},
          {"mfr_recycled", mfr_recycled},
          {"mfr_filler_rate", mfr_filler_rate},
          {"mfr_modifier_rate", mfr_modifier_rate},
          {"youngs_virgin", youngs_virgin},
          {"youngs_recycled", youngs_recycled},
          {"youngs_filler_gain", youngs_filler_gain},
          {"youngs_modifier_rate", youngs_modifier_rate},
          {"impact_virgin", impact_virgin},
          {"impact_recycled", impact_recycled},
          {"impact_modifier_gain", impact_modifier_gain},
          {"impact_transition", impact_transition},
          {"impact_transition_width", impact_transition_width},
          {"impact_filler_synergy", impact_filler_synergy},
          {"impact_filler_rate", impact_filler_rate}};
}

SyntheticParams SyntheticParams::from_json(const nlohmann::json& j) {
  SyntheticParams p;
  const auto read = [&](const char* key, double& field) {
    if (j.contains(key)) field = j.at(key).get<double>();
  };
  read("mfr_virgin", p.mfr_virgin);
  read("mfr_recycled", p.mfr_recycled);
  read("mfr_filler_rate", p.mfr_filler_rate);
  read("mfr_modifier_rate", p.mfr_modifier_rate);
  read("youngs_virgin", p.youngs_virgin);
  read("youngs_recycled", p.youngs_recycled);
  read("youngs_filler_gain", p.youngs_filler_gain);
  read("youngs_modifier_rate", p.youngs_modifier_rate);
  read("impact_virgin", p.impact_virgin);
  read("impact_recycled", p.impact_recycled);
  read("impact_modifier_gain", p.impact_modifier_gain);
  read("impact_transition", p.impact_transition);
  read("impact_transition_width", p.impact_transition_width);
  read("impact_filler_synergy", p.impact_filler_synergy);
  read("impact_filler_rate", p.impact_filler_rate);
  if (!(p.mfr_virgin > 0.0 && p.mfr_recycled > 0.0 && p.youngs_virgin > 0.0 &&
        p.youngs_recycled > 0.0 && p.impact_virgin > 0.0 && p.impact_recycled > 0.0 &&
        p.impact_transition_width > 0.0 && p.youngs_filler_gain > -1.0 &&
        p.impact_modifier_gain >= 0.0)) {
    throw Error(ErrorKind::SchemaError, "synthetic parameters must keep every metric positive");
  }
  return p;
}

LandscapeAudit audit_landscape(const SyntheticParams& params, const DomainSpec& domain,
                               const ProblemSpec& problem, int samples, std::uint64_t seed) {
  static std::mutex mutex;
  static std::map<std::string, LandscapeAudit> memo;
  const std::string key = params.to_json().dump() + domain.to_json().dump() +
                          problem.to_json().dump() + std::to_string(samples) + ":" +
                          std::to_string(seed);
  {
    std::lock_guard lock(mutex);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
  }
  const auto draws = sample_dirichlet_rejection(domain, samples, seed);
  LandscapeAudit audit;
  audit.samples = samples;
  double sy = 0, si = 0, syy = 0, sii = 0, syi = 0;
  int feasible = 0;
  for (const auto& r : draws.recipes) {
    const auto m = params.evaluate(r.fractions());
    if (problem.feasible(m)) ++feasible;
    sy += m.youngs_modulus;
    si += m.impact_strength;
    syy += m.youngs_modulus * m.youngs_modulus;
    sii += m.impact_strength * m.impact_strength;
    syi += m.youngs_modulus * m.impact_strength;
  }
  const double n = samples;
  audit.feasible_fraction = feasible / n;
  const double cov = syi / n - (sy / n) * (si / n);
  const double vy = syy / n - (sy / n) * (sy / n);
  const double vi = sii / n - (si / n) * (si / n);
  audit.youngs_impact_correlation = cov / std::sqrt(vy * vi);
  std::lock_guard lock(mutex);
  memo.emplace(key, audit);
  return audit;
}

OracleSpec make_synthetic_oracle(const SyntheticParams& params, const DomainSpec& domain,
                                 const ProblemSpec& problem) {
  const auto audit = audit_landscape(params, domain, problem);
  if (audit.feasible_fraction < 1e-3) {
    throw Error(ErrorKind::InvalidArgument, "synthetic landscape has no usable feasible region",
                {{"feasible_fraction", audit.feasible_fraction}});
  }
  if (!(audit.youngs_impact_correlation < 0.0)) {
    throw Error(ErrorKind::InvalidArgument,
                "synthetic landscape lacks the Young's modulus / impact strength trade-off",
                {{"correlation", audit.youngs_impact_correlation}});
  }
  OracleSpec o;
  o.kind = OracleSpec::Kind::Synthetic;
  o.synthetic = params;
  o.domain = domain.with_feature_map(FeatureMapKind::Plain4d);
  return o;
}

QualityMetrics query(const OracleSpec& oracle, const MixtureRecipe& recipe,
                     std::string_view experiment_id) {
  oracle.domain.validate(recipe);
  QualityMetrics m;
  if (oracle.kind == OracleSpec::Kind::Synthetic) {
    m = oracle.synthetic.evaluate(recipe.fractions());
  } else {
    if (!oracle.models) throw Error(ErrorKind::InvalidState, "data-trained oracle has no models");
    const Eigen::VectorXd f = oracle.domain.features(recipe.fractions());
    for (Metric metric : kAllMetrics) {
      const auto& model = oracle.models->at(metric);
      const auto post = gp::predict(model, f.transpose(), false);
      m.get(metric) = model.scaling.unscale_output(post.mean(0));
    }
  }
  const bool noisy = std::any_of(oracle.noise_std.begin(), oracle.noise_std.end(),
                                 [](double s) { return s > 0.0; });
  if (noisy) {
    std::mt19937_64 rng(oracle.seed ^ fnv1a(experiment_id));
    std::normal_distribution<double> gauss(0.0, 1.0);
    for (Metric metric : kAllMetrics) {
      const double eps = gauss(rng);
      m.get(metric) += oracle.noise_std[static_cast<int>(metric)] * eps;
    }
  }
  for (Metric metric : kAllMetrics) m.get(metric) = std::max(m.get(metric), 1e-6);
  return m;
}

nlohmann::json ValidationReport::to_json() const {
  nlohmann::json metrics = nlohmann::json::object();
  for (Metric m : kAllMetrics) {
    const int k = static_cast<int>(m);
    nlohmann::json pts = nlohmann::json::array();
    for (const auto& p : points[k]) {
      pts.push_back({{"index", p.index},
                     {"truth", p.truth},
                     {"predicted", p.predicted},
                     {"predictive_std", p.predictive_std}});
    }
    metrics[std::string(to_string(m))] = {{"rmse", rmse[k]}, {"range", range[k]}, {"points", pts}};
  }
  return {{"method", method}, {"train_fraction", train_fraction}, {"metrics", metrics}};
}

DataOracle build_data_oracle(const std::vector<Experiment>& rows_in, const DomainSpec& domain,
                             const ValidationSpec& validation, const gp::FitOptions& fit_options) {
  std::vector<Experiment> rows;
  for (const auto& r : rows_in) {
    if (r.completed()) rows.push_back(r);
  }
  if (rows.size() < 5) {
    throw Error(ErrorKind::SchemaError, "data oracle needs at least 5 completed rows",
                {{"rows", rows.size()}});
  }
  for (const auto& r : rows) {
    domain.validate(r.recipe);
    r.measured->validate();
  }
  const int n = static_cast<int>(rows.size());
  std::vector<MixtureRecipe> recipes;
  for (const auto& r : rows) recipes.push_back(r.recipe);
  const Eigen::MatrixXd x = domain.features(recipes);
  const auto scaling = domain.feature_scaling();

  DataOracle out;
  auto& report = out.report;
  auto models = std::make_shared<MetricModels>();
  for (Metric m : kAllMetrics) {
    const int k = static_cast<int>(m);
    Eigen::VectorXd y(n);
    for (int i = 0; i < n; ++i) y(i) = rows[static_cast<std::size_t>(i)].measured->get(m);
    report.range[k] = y.maxCoeff() - y.minCoeff();

    if (validation.method == ValidationSpec::Method::Loo) {
      report.method = "loo";
      report.train_fraction = static_cast<double>(n - 1) / n;
      const auto loo = gp::loo_cv(x, y, scaling, fit_options);
      report.rmse[k] = loo.rmse;
      for (int i = 0; i < n; ++i) {
        report.points[k].push_back({i, y(i), loo.predictions(i), std::sqrt(loo.variances(i))});
      }
    } else {
      report.method = "holdout";
      report.train_fraction = validation.train_fraction;
      std::vector<int> order(static_cast<std::size_t>(n));
      std::iota(order.begin(), order.end(), 0);
      std::mt19937_64 rng(fit_options.seed);
      std::shuffle(order.begin(), order.end(), rng);
      const int n_train = std::clamp(static_cast<int>(std::lround(validation.train_fraction * n)), 2, n - 1);
      Eigen::MatrixXd xt(n_train, x.cols());
      Eigen::VectorXd yt(n_train);
      for (int i = 0; i < n_train; ++i) {
        xt.row(i) = x.row(order[static_cast<std::size_t>(i)]);
        yt(i) = y(order[static_cast<std::size_t>(i)]);
      }
      const auto model = gp::fit(xt, yt, scaling, fit_options);
      double sq = 0.0;
      for (int i = n_train; i < n; ++i) {
        const int idx = order[static_cast<std::size_t>(i)];
        const auto post = gp::predict(model, x.row(idx), false);
        const double pred = model.scaling.unscale_output(post.mean(0));
        const double sd = std::sqrt(model.scaling.unscale_variance(post.variance(0)));
        report.points[k].push_back({idx, y(idx), pred, sd});
        sq += (pred - y(idx)) * (pred - y(idx));
      }
      report.rmse[k] = std::sqrt(sq / (n - n_train));
    }
    models->at(m) = gp::fit(x, y, scaling, fit_options);
  }
  out.oracle.kind = OracleSpec::Kind::DataTrained;
  out.oracle.models = models;
  out.oracle.domain = domain;
  return out;
}

nlohmann::json OracleSpec::to_json() const {
  nlohmann::json noise = nlohmann::json::object();
  for (Metric m : kAllMetrics) noise[std::string(to_string(m))] = noise_std[static_cast<int>(m)];
  if (kind == Kind::Synthetic) {
    return {{"kind", "synthetic"}, {"params", synthetic.to_json()}, {"noise_std", noise},
            {"seed", seed}, {"domain", domain.to_json()}};
  }
  nlohmann::json j{{"kind", "data_trained"}, {"dataset", dataset}, {"noise_std", noise},
                   {"seed", seed}, {"domain", domain.to_json()}};
  if (models) {
    nlohmann::json ms = nlohmann::json::object();
    for (Metric m : kAllMetrics) ms[std::string(to_string(m))] = gp::to_json(models->at(m));
    j["models"] = ms;
  }
  return j;
}

OracleSpec OracleSpec::from_json(const nlohmann::json& j) {
  try {
    const auto kind = j.value("kind", std::string("synthetic"));
    const DomainSpec domain = j.contains("domain") ? DomainSpec::from_json(j.at("domain")) : DomainSpec();
    OracleSpec o;
    if (kind == "synthetic") {
      const auto params = j.contains("params") ? SyntheticParams::from_json(j.at("params")) : SyntheticParams{};
      o = make_synthetic_oracle(params, domain, ProblemSpec{});
    } else if (kind == "data_trained") {
      if (j.contains("models")) {
        auto models = std::make_shared<MetricModels>();
        for (Metric m : kAllMetrics) {
          models->at(m) = gp::model_from_json(j.at("models").at(std::string(to_string(m))));
        }
        o.models = models;
        o.domain = domain;
      } else {
        const auto rows = read_experiments_csv_file(j.at("dataset").get<std::string>());
        o = build_data_oracle(rows, domain).oracle;
      }
      o.kind = Kind::DataTrained;
      o.dataset = j.value("dataset", std::string());
    } else {
      throw Error(ErrorKind::SchemaError, "unknown oracle kind: " + kind);
    }
    o.noise_std = noise_from_json(j);
    o.seed = j.value("seed", std::uint64_t{0});
    return o;
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorKind::SchemaError, std::string("oracle spec: ") + e.what());
  }
}

std::vector<Experiment> scarce_feasible_dataset(const OracleSpec& oracle, const DomainSpec& domain,
                                                const ProblemSpec& problem, int count,
                                                int impact_feasible, std::uint64_t seed) {
  if (count < impact_feasible || impact_feasible < 0) {
    throw Error(ErrorKind::InvalidArgument, "impact_feasible must be within [0, count]");
  }
  std::vector<Experiment> bulk, rare;
  std::uint64_t round = 0;
  while (static_cast<int>(bulk.size()) < count - impact_feasible ||
         static_cast<int>(rare.size()) < impact_feasible) {
    if (round > 1000) {
      throw Error(ErrorKind::InvalidArgument, "could not assemble a scarce-feasible dataset");
    }
    const auto draws = sample_dirichlet_rejection(domain, 512, seed * 7919ULL + round++);
    for (const auto& r : draws.recipes) {
      const auto m = query(oracle, r, {});
      if (problem.feasible(m)) continue;
      Experiment e;
      e.recipe = r;
      e.measured = m;
      e.provenance = Provenance::Historical;
      e.batch_index = -1;
      if (problem.impact_ok(m)) {
        if (static_cast<int>(rare.size()) < impact_feasible) rare.push_back(e);
      } else if (r.impact_modifier <= 0.25 * domain.upper()(3) &&
                 static_cast<int>(bulk.size()) < count - impact_feasible) {
        bulk.push_back(e);
      }
    }
  }
  bulk.insert(bulk.end(), rare.begin(), rare.end());
  for (std::size_t i = 0; i < bulk.size(); ++i) bulk[i].id = "hist-" + std::to_string(i + 1);
  return bulk;
}

}  // namespace mixbo
