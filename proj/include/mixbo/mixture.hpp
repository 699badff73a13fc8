#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Dense>
#include <json.hpp>

#include "mixbo/gp.hpp"

namespace mixbo {

inline constexpr int kComponents = 4;
using Fractions = Eigen::Matrix<double, kComponents, 1>;

enum class Component { VirginPP = 0, Recycled = 1, Filler = 2, ImpactModifier = 3 };

/// Mass fractions of the four raw materials.
struct MixtureRecipe {
  double virgin_pp = 0.0;
  double recycled = 0.0;
  double filler = 0.0;
  double impact_modifier = 0.0;

  Fractions fractions() const { return {virgin_pp, recycled, filler, impact_modifier}; }
  static MixtureRecipe from_fractions(const Fractions& x) { return {x(0), x(1), x(2), x(3)}; }

  bool operator==(const MixtureRecipe&) const = default;
};

/// Data-sheet values for one raw material.
struct IngredientSheet {
  std::string material_id;
  Component role = Component::VirginPP;
  double nominal_mfr_g_per_10min = 0.0;
  double nominal_youngs_mpa = 0.0;
  double nominal_impact_kj_per_m2 = 0.0;
};

/// One sheet per role, indexed by Component.
struct IngredientSheetSet {
  std::array<IngredientSheet, kComponents> sheets;

  static IngredientSheetSet defaults();
  static IngredientSheetSet from_json(const nlohmann::json& j);
  nlohmann::json to_json() const;
};

enum class FeatureMapKind { Plain4d, Augmented };

std::string_view to_string(FeatureMapKind kind);
FeatureMapKind feature_map_from_string(std::string_view name);

/// The bounded simplex {0 <= x <= upper, sum x = 1} and how recipes become
/// model inputs.
class DomainSpec {
 public:
  DomainSpec();
  explicit DomainSpec(const Fractions& upper, FeatureMapKind map = FeatureMapKind::Plain4d,
                      IngredientSheetSet sheets = IngredientSheetSet::defaults());

  const Fractions& upper() const { return upper_; }
  FeatureMapKind feature_map() const { return map_; }
  const IngredientSheetSet& sheets() const { return sheets_; }
  DomainSpec with_feature_map(FeatureMapKind map) const;

  int feature_dimension() const { return map_ == FeatureMapKind::Plain4d ? 4 : 11; }
  Eigen::VectorXd features(const Fractions& x) const;
  Eigen::MatrixXd features(const std::vector<MixtureRecipe>& recipes) const;
  /// Unit-box scaling of the feature space; bounds come from the vertices of
  /// the domain polytope.
  gp::ScalingSpec feature_scaling() const;

  /// Throws OutOfDomain unless the recipe satisfies bounds and sum-to-one.
  void validate(const MixtureRecipe& recipe) const;
  bool contains(const Fractions& x, double tol = 1e-9) const;
  /// Per-component position in [0, 1] relative to the component bounds.
  Fractions scaled(const Fractions& x) const { return x.cwiseQuotient(upper_); }

  std::vector<Fractions> vertices() const;

  nlohmann::json to_json() const;
  static DomainSpec from_json(const nlohmann::json& j);

 private:
  Fractions upper_;
  FeatureMapKind map_;
  IngredientSheetSet sheets_;
};

struct DirichletSample {
  std::vector<MixtureRecipe> recipes;
  std::uint64_t rejected = 0;
};

/// Dirichlet(alpha) draws conditioned on the domain's box bounds by
/// rejection. Throws RejectionBudgetExceeded after 10^6 consecutive rejects.
DirichletSample sample_dirichlet_rejection(const DomainSpec& domain, int count,
                                           std::uint64_t seed,
                                           std::optional<Fractions> alpha = std::nullopt);

/// Euclidean projection onto the domain.
MixtureRecipe project_feasible(const DomainSpec& domain, const Fractions& point);
Fractions project_fractions(const DomainSpec& domain, const Fractions& point);

}  // namespace mixbo
