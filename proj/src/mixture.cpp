#include "mixbo/mixture.hpp"

#include <algorithm>
#include <cmath>
#include <random>

#include "mixbo/error.hpp"

namespace mixbo {

namespace {

constexpr std::array<const char*, kComponents> kRoleNames{"virgin", "recycled", "filler",
                                                          "impact_modifier"};

Component role_from_string(const std::string& s) {
  for (int i = 0; i < kComponents; ++i) {
    if (s == kRoleNames[i]) return static_cast<Component>(i);
  }
  throw Error(ErrorKind::SchemaError, "unknown ingredient role: " + s);
}

}  // namespace

IngredientSheetSet IngredientSheetSet::defaults() {
  IngredientSheetSet set;
  set.sheets[0] = {"PP-H-virgin", Component::VirginPP, 9.0, 1450.0, 2.5};
  set.sheets[1] = {"PP-recyclate", Component::Recycled, 24.0, 950.0, 4.0};
  set.sheets[2] = {"talc-filler", Component::Filler, 0.5, 6000.0, 1.0};
  set.sheets[3] = {"elastomer-modifier", Component::ImpactModifier, 3.0, 300.0, 45.0};
  return set;
}

IngredientSheetSet IngredientSheetSet::from_json(const nlohmann::json& j) {
  if (!j.is_array() || j.size() != kComponents) {
    throw Error(ErrorKind::SchemaError, "ingredient sheets: expected an array of 4 materials");
  }
  IngredientSheetSet set;
  std::array<bool, kComponents> seen{};
  for (const auto& item : j) {
    try {
      IngredientSheet s;
      s.material_id = item.at("material_id").get<std::string>();
      s.role = role_from_string(item.at("role").get<std::string>());
      s.nominal_mfr_g_per_10min = item.at("nominal_mfr_g_per_10min").get<double>();
      s.nominal_youngs_mpa = item.at("nominal_youngs_mpa").get<double>();
      s.nominal_impact_kj_per_m2 = item.at("nominal_impact_kj_per_m2").get<double>();
      const int idx = static_cast<int>(s.role);
      if (seen[idx]) throw Error(ErrorKind::SchemaError, "duplicate role in ingredient sheets");
      if (!(s.nominal_mfr_g_per_10min > 0.0)) {
        throw Error(ErrorKind::SchemaError, "nominal MFR must be positive");
      }
      seen[idx] = true;
      set.sheets[idx] = s;
    } catch (const nlohmann::json::exception& e) {
      throw Error(ErrorKind::SchemaError, std::string("ingredient sheet: ") + e.what());
    }
  }
  return set;
}

nlohmann::json IngredientSheetSet::to_json() const {
  nlohmann::json out = nlohmann::json::array();
  for (const auto& s : sheets) {
    out.push_back({{"material_id", s.material_id},
                   {"role", kRoleNames[static_cast<int>(s.role)]},
                   {"nominal_mfr_g_per_10min", s.nominal_mfr_g_per_10min},
                   {"nominal_youngs_mpa", s.nominal_youngs_mpa},
                   {"nominal_impact_kj_per_m2", s.nominal_impact_kj_per_m2}});
  }
  return out;
}

std::string_view to_string(FeatureMapKind kind) {
  return kind == FeatureMapKind::Plain4d ? "plain_4d" : "augmented";
}

FeatureMapKind feature_map_from_string(std::string_view name) {
  if (name == "plain_4d") return FeatureMapKind::Plain4d;
  if (name == "augmented") return FeatureMapKind::Augmented;
  throw Error(ErrorKind::InvalidArgument, "unknown feature map: " + std::string(name));
}

DomainSpec::DomainSpec() : DomainSpec(Fractions(1.0, 1.0, 0.3, 0.2)) {}

DomainSpec::DomainSpec(const Fractions& upper, FeatureMapKind map, IngredientSheetSet sheets)
    : upper_(upper), map_(map), sheets_(std::move(sheets)) {
  if (!upper_.allFinite() || (upper_.array() <= 0.0).any() || (upper_.array() > 1.0).any()) {
    throw Error(ErrorKind::InvalidArgument, "component upper bounds must lie in (0, 1]");
  }
  if (upper_.sum() < 1.0) {
    throw Error(ErrorKind::EmptyDomain, "upper bounds sum below one: the domain is empty");
  }
}

DomainSpec DomainSpec::with_feature_map(FeatureMapKind map) const {
  return DomainSpec(upper_, map, sheets_);
}

Eigen::VectorXd DomainSpec::features(const Fractions& x) const {
  if (map_ == FeatureMapKind::Plain4d) return x;
  Eigen::VectorXd f(11);
  f.head<4>() = x;
  double mfr = 0.0, youngs = 0.0, impact = 0.0;
  for (int i = 0; i < kComponents; ++i) {
    mfr += x(i) * sheets_.sheets[i].nominal_mfr_g_per_10min;
    youngs += x(i) * sheets_.sheets[i].nominal_youngs_mpa;
    impact += x(i) * sheets_.sheets[i].nominal_impact_kj_per_m2;
  }
  f(4) = mfr;
  f(5) = youngs;
  f(6) = impact;
  for (int i = 0; i < kComponents; ++i) {
    f(7 + i) = x(i) * sheets_.sheets[i].nominal_mfr_g_per_10min / mfr;
  }
  return f;
}

Eigen::MatrixXd DomainSpec::features(const std::vector<MixtureRecipe>& recipes) const {
  Eigen::MatrixXd out(static_cast<Eigen::Index>(recipes.size()), feature_dimension());
  for (std::size_t i = 0; i < recipes.size(); ++i) {
    out.row(static_cast<Eigen::Index>(i)) = features(recipes[i].fractions()).transpose();
  }
  return out;
}

std::vector<Fractions> DomainSpec::vertices() const {
  std::vector<Fractions> out;
  for (int free = 0; free < kComponents; ++free) {
    for (int mask = 0; mask < (1 << (kComponents - 1)); ++mask) {
      Fractions x = Fractions::Zero();
      double sum = 0.0;
      for (int i = 0, bit = 0; i < kComponents; ++i) {
        if (i == free) continue;
        x(i) = (mask >> bit++) & 1 ? upper_(i) : 0.0;
        sum += x(i);
      }
      x(free) = 1.0 - sum;
      if (x(free) < -1e-12 || x(free) > upper_(free) + 1e-12) continue;
      x(free) = std::clamp(x(free), 0.0, upper_(free));
      const bool dup = std::any_of(out.begin(), out.end(),
                                   [&](const Fractions& v) { return (v - x).norm() < 1e-12; });
      if (!dup) out.push_back(x);
    }
  }
  return out;
}

gp::ScalingSpec DomainSpec::feature_scaling() const {
  const int d = feature_dimension();
  Eigen::VectorXd lo = Eigen::VectorXd::Constant(d, std::numeric_limits<double>::infinity());
  Eigen::VectorXd hi = -lo;
  if (map_ == FeatureMapKind::Plain4d) {
    lo.setZero();
    hi = upper_;
  } else {
    // Every augmented feature is linear or linear-fractional in the
    // fractions, so its extremes over the polytope sit at vertices.
    for (const auto& v : vertices()) {
      const Eigen::VectorXd f = features(v);
      lo = lo.cwiseMin(f);
      hi = hi.cwiseMax(f);
    }
  }
  for (int i = 0; i < d; ++i) {
    if (hi(i) - lo(i) < 1e-12) hi(i) = lo(i) + 1.0;
  }
  return {lo, hi, 0.0, 1.0};
}

bool DomainSpec::contains(const Fractions& x, double tol) const {
  if (!x.allFinite()) return false;
  if ((x.array() < -tol).any() || ((x - upper_).array() > tol).any()) return false;
  return std::abs(x.sum() - 1.0) <= tol;
}

void DomainSpec::validate(const MixtureRecipe& recipe) const {
  const Fractions x = recipe.fractions();
  if (!contains(x, 1e-9)) {
    throw Error(ErrorKind::OutOfDomain, "recipe violates bounds or sum-to-one",
                {{"recipe", std::vector<double>(x.data(), x.data() + kComponents)}});
  }
}

nlohmann::json DomainSpec::to_json() const {
  return {{"upper_bounds", std::vector<double>(upper_.data(), upper_.data() + kComponents)},
          {"feature_map", to_string(map_)},
          {"ingredient_sheets", sheets_.to_json()}};
}

DomainSpec DomainSpec::from_json(const nlohmann::json& j) {
  Fractions upper(1.0, 1.0, 0.3, 0.2);
  if (j.contains("upper_bounds")) {
    const auto u = j.at("upper_bounds").get<std::vector<double>>();
    if (u.size() != kComponents) throw Error(ErrorKind::SchemaError, "upper_bounds needs 4 values");
    upper = Fractions(u[0], u[1], u[2], u[3]);
  }
  const auto map = j.contains("feature_map")
                       ? feature_map_from_string(j.at("feature_map").get<std::string>())
                       : FeatureMapKind::Plain4d;
  const auto sheets = j.contains("ingredient_sheets")
                          ? IngredientSheetSet::from_json(j.at("ingredient_sheets"))
                          : IngredientSheetSet::defaults();
  return DomainSpec(upper, map, sheets);
}

DirichletSample sample_dirichlet_rejection(const DomainSpec& domain, int count,
                                           std::uint64_t seed, std::optional<Fractions> alpha) {
  if (count < 1) throw Error(ErrorKind::InvalidArgument, "count must be >= 1");
  const Fractions a = alpha.value_or(Fractions::Ones());
  if ((a.array() <= 0.0).any()) throw Error(ErrorKind::InvalidArgument, "alpha must be positive");
  std::mt19937_64 rng(seed);
  std::array<std::gamma_distribution<double>, kComponents> gammas{
      std::gamma_distribution<double>(a(0)), std::gamma_distribution<double>(a(1)),
      std::gamma_distribution<double>(a(2)), std::gamma_distribution<double>(a(3))};
  DirichletSample out;
  out.recipes.reserve(static_cast<std::size_t>(count));
  std::uint64_t consecutive = 0;
  while (static_cast<int>(out.recipes.size()) < count) {
    Fractions x;
    for (int i = 0; i < kComponents; ++i) x(i) = gammas[i](rng);
    x /= x.sum();
    if (((x - domain.upper()).array() <= 0.0).all()) {
      out.recipes.push_back(MixtureRecipe::from_fractions(x));
      consecutive = 0;
    } else {
      ++out.rejected;
      if (++consecutive >= 1'000'000) {
        throw Error(ErrorKind::RejectionBudgetExceeded,
                    "10^6 consecutive Dirichlet draws rejected; the domain is over-constrained",
                    {{"accepted", out.recipes.size()}, {"rejected", out.rejected}});
      }
    }
  }
  return out;
}

Fractions project_fractions(const DomainSpec& domain, const Fractions& p) {
  if (!p.allFinite()) throw Error(ErrorKind::InvalidArgument, "projection input must be finite");
  const Fractions& u = domain.upper();
  if (u.sum() < 1.0) throw Error(ErrorKind::EmptyDomain, "domain is empty");
  // The projection is clamp(p - lambda, 0, u) with lambda chosen so the
  // fractions sum to one; the sum is piecewise linear in lambda.
  auto total = [&](double lambda) {
    return (p.array() - lambda).max(0.0).min(u.array()).sum();
  };
  std::array<double, 2 * kComponents> breaks{};
  for (int i = 0; i < kComponents; ++i) {
    breaks[2 * i] = p(i) - u(i);
    breaks[2 * i + 1] = p(i);
  }
  std::sort(breaks.begin(), breaks.end());
  // total() is non-increasing; find adjacent breakpoints bracketing 1.
  double lambda = breaks.front();
  if (total(breaks.front()) <= 1.0) {
    lambda = breaks.front();
  } else {
    lambda = breaks.back();
    for (std::size_t k = 1; k < breaks.size(); ++k) {
      const double t0 = total(breaks[k - 1]);
      const double t1 = total(breaks[k]);
      if (t0 >= 1.0 && t1 <= 1.0) {
        lambda = t0 == t1 ? breaks[k - 1]
                          : breaks[k - 1] + (t0 - 1.0) * (breaks[k] - breaks[k - 1]) / (t0 - t1);
        break;
      }
    }
  }
  Fractions x = (p.array() - lambda).max(0.0).min(u.array());
  // Absorb rounding so the sum is one to machine precision.
  const double residual = 1.0 - x.sum();
  if (residual != 0.0) {
    for (int i = 0; i < kComponents; ++i) {
      const double room = residual > 0.0 ? u(i) - x(i) : x(i);
      if (room > std::abs(residual) && x(i) > 0.0 && x(i) < u(i)) {
        x(i) += residual;
        break;
      }
    }
  }
  return x;
}

MixtureRecipe project_feasible(const DomainSpec& domain, const Fractions& point) {
  return MixtureRecipe::from_fractions(project_fractions(domain, point));
}

}  // namespace mixbo
