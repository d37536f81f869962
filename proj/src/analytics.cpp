#include "hierdp/analytics.hpp"

#include <cmath>

namespace hierdp {

Eigen::VectorXd error_recursion(const Hierarchy& hier,
                                const Eigen::Ref<const Eigen::VectorXd>& draws) {
  if (draws.size() != hier.node_count())
    throw InputError("draw vector must cover every node");
  if (draws.hasNaN()) throw InputError("draw vector has unset entries");

  Eigen::VectorXd errors(hier.node_count());
  errors[0] = draws[0];
  for (NodeId id = 0; id < hier.node_count(); ++id) {
    const auto& ch = hier.children(id);
    if (ch.empty()) continue;
    double child_draw_sum = 0;
    for (NodeId c : ch) child_draw_sum += draws[c];
    double residual = (errors[id] - child_draw_sum) / static_cast<double>(ch.size());
    for (NodeId c : ch) errors[c] = draws[c] + residual;
  }
  return errors;
}

double district_error_closed_form(const District& district,
                                  const Eigen::Ref<const Eigen::VectorXd>& draws) {
  const Hierarchy& h = *district.hier;
  if (draws.size() != h.node_count())
    throw InputError("draw vector must cover every node");
  double total = district.weights[0] * draws[0];
  for (NodeId id = 1; id < h.node_count(); ++id)
    total += (district.weights[id] - district.weights[h.parent(id)]) * draws[id];
  return total;
}

VarianceReport district_error_variance(const District& district, const BudgetAllocation& alloc) {
  const Hierarchy& h = *district.hier;
  if (alloc.depth() != h.depth()) throw InputError("budget depth must match hierarchy depth");
  alloc.require_positive();

  VarianceReport report;
  report.per_level.setZero(h.depth());
  double w1 = district.weights[0];
  report.per_level[0] = noise_variance(alloc.level(1)) * w1 * w1;
  for (NodeId id = 1; id < h.node_count(); ++id) {
    double diff = district.weights[id] - district.weights[h.parent(id)];
    report.per_level[h.level(id) - 1] += noise_variance(alloc.level(h.level(id))) * diff * diff;
  }
  report.total = report.per_level.sum();
  return report;
}

Eigen::VectorXd homogeneous_variance_coefficients(const std::vector<int>& branching) {
  int d = static_cast<int>(branching.size()) + 1;
  for (int n : branching)
    if (n < 1) throw InputError("branching factors must be >= 1");
  // below[l-1] = product of branching factors strictly below level l.
  std::vector<double> below(d, 1.0);
  for (int l = d - 1; l >= 1; --l) below[l - 1] = below[l] * branching[l - 1];

  Eigen::VectorXd coeffs(d);
  double base = 2.0 * kSensitivity * kSensitivity;
  coeffs[0] = base / (below[0] * below[0]);
  for (int l = 2; l <= d; ++l) {
    double n = branching[l - 2];
    double prod = n * below[l - 1];
    coeffs[l - 1] = base * n * (n - 1.0) / (prod * prod);
  }
  return coeffs;
}

double allocation_objective(const Eigen::Ref<const Eigen::VectorXd>& coeffs,
                            const Eigen::Ref<const Eigen::VectorXd>& levels) {
  if (coeffs.size() != levels.size()) throw InputError("coefficient/level size mismatch");
  double total = 0;
  for (Eigen::Index l = 0; l < coeffs.size(); ++l) {
    if (coeffs[l] == 0) continue;
    if (!(levels[l] > 0)) throw InputError("positive coefficient needs a positive budget level");
    total += coeffs[l] / (levels[l] * levels[l]);
  }
  return total;
}

double block_variance_homogeneous(const std::vector<int>& branching,
                                  const BudgetAllocation& alloc) {
  if (alloc.depth() != static_cast<int>(branching.size()) + 1)
    throw InputError("budget depth must match hierarchy depth");
  alloc.require_positive();
  return allocation_objective(homogeneous_variance_coefficients(branching), alloc.per_level);
}

BudgetAllocation optimal_allocation(const Eigen::Ref<const Eigen::VectorXd>& coeffs,
                                    double epsilon) {
  if (coeffs.size() == 0) throw InputError("allocation needs at least one coefficient");
  if ((coeffs.array() < 0).any()) throw InputError("coefficients must be non-negative");
  if (!(coeffs.sum() > 0)) throw InputError("coefficients must not all be zero");
  if (!(epsilon > 0)) throw InputError("epsilon must be positive");
  Eigen::VectorXd roots = coeffs.array().pow(1.0 / 3.0);
  return BudgetAllocation(Eigen::VectorXd(epsilon * roots / roots.sum()));
}

FragReport fragmentation(const District& district) {
  const Hierarchy& h = *district.hier;
  FragReport report;
  report.per_level.setZero(h.depth());
  for (NodeId id = 1; id < h.node_count(); ++id) {
    double diff = district.weights[id] - district.weights[h.parent(id)];
    report.per_level[h.level(id) - 1] += diff * diff;
  }
  report.score = report.per_level.sum();
  return report;
}

double var_frag_identity(const District& district, double epsilon, int depth) {
  if (!(epsilon > 0)) throw InputError("epsilon must be positive");
  if (depth != district.hier->depth()) throw InputError("depth must match the hierarchy");
  double w1 = district.weights[0];
  double per_level_eps = epsilon / depth;
  return noise_variance(per_level_eps) * (w1 * w1 + fragmentation(district).score);
}

double l1_error(const CountTable& a, const CountTable& b) {
  if (a.hierarchy_ptr() != b.hierarchy_ptr() && a.hierarchy().node_count() != b.hierarchy().node_count())
    throw InputError("tables must share a hierarchy");
  if (!(a.schema() == b.schema())) throw InputError("tables must share a type schema");
  double num = 0;
  for (NodeId leaf : a.hierarchy().leaves())
    num += (a.values().row(leaf) - b.values().row(leaf)).cwiseAbs().sum();
  double denom = a.total() + b.total();
  if (!(denom > 0)) throw InputError("population must be positive");
  return num / denom;
}

}  // namespace hierdp
