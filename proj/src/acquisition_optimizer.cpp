#include "mixbo/acquisition_optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "mixbo/error.hpp"

namespace mixbo {

namespace {

struct StartResult {
  Fractions x;
  double value = kLogZero;
  double initial_value = kLogZero;
};

class MemberSearch {
 public:
  MemberSearch(const ConstrainedAcquisition& acq, const DomainSpec& domain,
               const OptimizerOptions& options)
      : acq_(acq), domain_(domain), options_(options) {}

  double value(const Fractions& x) const {
    return acq_(domain_.features(x).transpose());
  }

  Fractions gradient(const Fractions& x) const {
    const Fractions h = options_.fd_step * domain_.upper();
    Fractions g;
    for (int i = 0; i < kComponents; ++i) {
      Fractions up = x, down = x;
      up(i) += h(i);
      down(i) -= h(i);
      g(i) = (value(up) - value(down)) / (2.0 * h(i));
    }
    return (g.array() - g.mean()).matrix();
  }

  // Projected quasi-Newton ascent; the BFGS metric lives in the sum-to-zero
  // tangent space and is reset whenever its direction fails.
  StartResult ascend(const Fractions& start) const {
    using Mat4 = Eigen::Matrix<double, kComponents, kComponents>;
    const Mat4 tangent = Mat4::Identity() - Mat4::Constant(1.0 / kComponents);
    StartResult r{start, value(start), 0.0};
    r.initial_value = r.value;
    Fractions g = gradient(r.x);
    if (!g.allFinite()) return r;
    auto initial_metric = [&](const Fractions& grad) {
      const double norm = grad.norm();
      return Mat4(tangent * (norm > 0.0 ? 0.05 / norm : 1.0));
    };
    Mat4 h = initial_metric(g);
    bool fresh = true;
    for (int it = 0; it < options_.iterations; ++it) {
      if (!(g.norm() > 1e-12)) break;
      Fractions dir = h * g;
      if (!(dir.dot(g) > 0.0)) {
        h = initial_metric(g);
        dir = h * g;
        fresh = true;
      }
      bool moved = false;
      Fractions trial;
      double v = 0.0;
      double t = 1.0;
      for (int ls = 0; ls < 30; ++ls, t *= 0.5) {
        trial = project_fractions(domain_, r.x + t * dir);
        const Fractions step = trial - r.x;
        if (step.norm() < 1e-12) break;
        v = value(trial);
        if (v > r.value + 1e-4 * g.dot(step)) {
          moved = true;
          break;
        }
      }
      if (!moved) {
        if (fresh) break;
        h = initial_metric(g);
        fresh = true;
        continue;
      }
      const Fractions s = trial - r.x;
      const Fractions g_new = gradient(trial);
      r.x = trial;
      r.value = v;
      if (!g_new.allFinite()) break;
      const Fractions y = g - g_new;
      const double sy = s.dot(y);
      if (sy > 1e-12) {
        const double rho = 1.0 / sy;
        const Mat4 left = Mat4::Identity() - rho * s * y.transpose();
        h = left * h * left.transpose() + rho * s * s.transpose();
        fresh = false;
      }
      g = g_new;
    }
    return r;
  }

 private:
  const ConstrainedAcquisition& acq_;
  const DomainSpec& domain_;
  const OptimizerOptions& options_;
};

Eigen::MatrixXd append_row(const Eigen::MatrixXd& m, const Eigen::VectorXd& row) {
  Eigen::MatrixXd out(m.rows() + 1, row.size());
  if (m.rows() > 0) out.topRows(m.rows()) = m;
  out.row(m.rows()) = row.transpose();
  return out;
}

}  // namespace

BatchProposal optimize_acquisition(const MetricModels& models_in, const AcquisitionSpec& spec,
                                   const DomainSpec& domain, const OptimizerOptions& options) {
  spec.validate();
  if (options.batch_size < 1 || options.starts < 1 || options.raw_samples < options.starts) {
    throw Error(ErrorKind::InvalidArgument, "invalid optimizer options");
  }
  if (models_in.dimension() != domain.feature_dimension()) {
    throw Error(ErrorKind::DimensionMismatch, "models do not match the domain feature map");
  }
  MetricModels models = models_in;
  Eigen::MatrixXd observed = models.at(spec.objective.metric).raw_inputs;
  BatchProposal out;
  const std::size_t nc = spec.constraints.size();

  for (int member = 0; member < options.batch_size; ++member) {
    const ConstrainedAcquisition acq(models, observed, spec);
    const MemberSearch search(acq, domain, options);
    const auto pool = sample_dirichlet_rejection(
        domain, options.raw_samples, options.seed * 1000003ULL + static_cast<std::uint64_t>(member));

    std::vector<double> pool_values(pool.recipes.size());
    for (std::size_t i = 0; i < pool.recipes.size(); ++i) {
      pool_values[i] = search.value(pool.recipes[i].fractions());
    }
    std::vector<std::size_t> order(pool.recipes.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return pool_values[a] > pool_values[b]; });

    FeasibilityReport report;
    report.best_pof.assign(nc, 0.0);
    auto audit = [&](const Fractions& x) {
      const auto terms = log_prob_feasible_terms(models, domain.features(x), spec.constraints);
      double total = 0.0;
      for (std::size_t c = 0; c < nc; ++c) {
        report.best_pof[c] = std::max(report.best_pof[c], std::exp(terms[c]));
        total += terms[c];
      }
      report.best_log_pof = std::max(report.best_log_pof, std::max(kLogZero, total));
    };

    std::vector<StartResult> results;
    double best_start = kLogZero;
    for (int s = 0; s < options.starts; ++s) {
      const Fractions x0 = pool.recipes[order[static_cast<std::size_t>(s)]].fractions();
      results.push_back(search.ascend(x0));
      best_start = std::max(best_start, results.back().initial_value);
      audit(x0);
      audit(results.back().x);
    }
    if (nc > 0 && report.best_log_pof < kInfeasibleLogPof) {
      nlohmann::json per = nlohmann::json::object();
      for (std::size_t c = 0; c < nc; ++c) {
        per[std::string(to_string(spec.constraints[c].metric))] = report.best_pof[c];
      }
      throw Error(ErrorKind::AllStartsInfeasible,
                  "acquisition optimization found no region with probability of feasibility "
                  "above 1e-6",
                  {{"batch_member", member},
                   {"best_joint_pof", std::exp(report.best_log_pof)},
                   {"best_pof_per_constraint", per}});
    }

    std::vector<std::size_t> ranked(results.size());
    std::iota(ranked.begin(), ranked.end(), std::size_t{0});
    std::stable_sort(ranked.begin(), ranked.end(),
                     [&](std::size_t a, std::size_t b) { return results[a].value > results[b].value; });
    const StartResult* chosen = &results[ranked.front()];
    for (std::size_t idx : ranked) {
      const auto& cand = results[idx];
      const bool duplicate = std::any_of(out.recipes.begin(), out.recipes.end(), [&](const MixtureRecipe& r) {
        return (r.fractions() - cand.x).norm() <= 1e-6;
      });
      if (!duplicate) {
        chosen = &cand;
        break;
      }
    }

    const Eigen::VectorXd feat = domain.features(chosen->x);
    const auto terms = acq.evaluate(feat.transpose());
    out.recipes.push_back(MixtureRecipe::from_fractions(chosen->x));
    out.features.push_back(feat);
    out.acquisition_values.push_back(chosen->value);
    out.best_start_values.push_back(best_start);
    out.feasibility.push_back(report);
    out.traces.push_back(acquisition_trace(feat, terms, spec.constraints));

    if (member + 1 < options.batch_size) {
      for (Metric m : kAllMetrics) {
        auto& model = models.at(m);
        const auto post = gp::predict(model, feat.transpose(), false);
        const Eigen::VectorXd believed =
            Eigen::VectorXd::Constant(1, model.scaling.unscale_output(post.mean(0)));
        model = gp::condition_on(model, feat.transpose(), believed);
      }
      observed = append_row(observed, feat);
    }
  }
  return out;
}

}  // namespace mixbo
