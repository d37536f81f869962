#pragma once

#include <Eigen/Dense>
#include <vector>

#include "hierdp/hierarchy.hpp"
#include "hierdp/mechanisms.hpp"

namespace hierdp {

struct VarianceReport {
  Eigen::VectorXd per_level;  // contribution of each level's noise
  double total = 0;
};

struct FragReport {
  double score = 0;
  Eigen::VectorXd per_level;  // index l-1; the root level contributes 0
};

// Post-sweep (unconstrained) error of every node, computed from the raw
// draws alone: the root keeps its draw, and each child inherits an equal
// share of its parent's residual.
Eigen::VectorXd error_recursion(const Hierarchy& hier,
                                const Eigen::Ref<const Eigen::VectorXd>& draws);

// District total error as a weighted sum of draws: w_root * L_root plus
// (w_h - w_parent(h)) * L_h over all other nodes.
double district_error_closed_form(const District& district,
                                  const Eigen::Ref<const Eigen::VectorXd>& draws);

// Exact variance of the district total error under per-level budgets.
VarianceReport district_error_variance(const District& district, const BudgetAllocation& alloc);

// Exact variance of a single deepest-level unit's error in a homogeneous
// hierarchy with the given branching (depth = branching.size() + 1).
double block_variance_homogeneous(const std::vector<int>& branching,
                                  const BudgetAllocation& alloc);

// Coefficients a_l with block variance = sum_l a_l / eps_l^2.
Eigen::VectorXd homogeneous_variance_coefficients(const std::vector<int>& branching);

// sum_l coeffs[l] / levels[l]^2.
double allocation_objective(const Eigen::Ref<const Eigen::VectorXd>& coeffs,
                            const Eigen::Ref<const Eigen::VectorXd>& levels);

// Minimizes sum_l a_l / x_l^2 subject to sum x_l = epsilon, x >= 0:
// x_l proportional to a_l^(1/3).
BudgetAllocation optimal_allocation(const Eigen::Ref<const Eigen::VectorXd>& coeffs,
                                    double epsilon);

// Sum over non-root nodes of (w_h - w_parent(h))^2.  Units inside (or
// disjoint from) a whole absorbed subtree contribute nothing; only the levels
// where the district boundary cuts across units add to the score.
FragReport fragmentation(const District& district);

// Under an equal split of epsilon across depth levels the district error
// variance collapses to (2 d^2 sensitivity^2 / eps^2) (w_root^2 + Frag).
double var_frag_identity(const District& district, double epsilon, int depth);

// Leaf-level L1 distance normalized by the two tables' combined population
// (twice the shared total when the totals agree).
double l1_error(const CountTable& a, const CountTable& b);

}  // namespace hierdp
