#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <numeric>
#include <vector>

#include "hierdp/hierarchy.hpp"
#include "hierdp/mechanisms.hpp"

namespace hierdp {

enum class AdjustMode { kUnconstrained, kNonNegative, kNonNegativeInteger };

// Least-squares fit of child values to a fixed parent total: spreads the
// residual evenly, argmin ||a - est||^2 subject to sum(a) = parent_value.
template <typename Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> project_children_unconstrained(
    typename Derived::Scalar parent_value, const Eigen::MatrixBase<Derived>& child_estimates) {
  using Scalar = typename Derived::Scalar;
  Eigen::Index n = child_estimates.size();
  if (n == 0) throw InputError("projection needs at least one child");
  Scalar shift = (parent_value - child_estimates.sum()) / static_cast<Scalar>(n);
  return child_estimates.derived().array() + shift;
}

// Euclidean projection onto the scaled simplex {a >= 0, sum(a) = total} by
// sort and threshold: find tau with sum(max(est - tau, 0)) = total.
template <typename Derived>
Eigen::Vector<typename Derived::Scalar, Eigen::Dynamic> project_simplex(
    const Eigen::MatrixBase<Derived>& child_estimates, typename Derived::Scalar total) {
  using Scalar = typename Derived::Scalar;
  Eigen::Index n = child_estimates.size();
  if (n == 0) throw InputError("projection needs at least one child");
  if (!(total >= 0)) throw InputError("simplex total must be non-negative");

  Eigen::Vector<Scalar, Eigen::Dynamic> sorted = child_estimates;
  std::sort(sorted.data(), sorted.data() + n, std::greater<Scalar>());
  Scalar cum = 0;
  // A zero total rejects even the largest entry; the threshold must then sit
  // at that entry so every coordinate clamps to zero.
  Scalar tau = sorted[0];
  for (Eigen::Index j = 0; j < n; ++j) {
    cum += sorted[j];
    Scalar cand = (cum - total) / static_cast<Scalar>(j + 1);
    if (sorted[j] - cand > 0)
      tau = cand;
    else
      break;
  }
  return (child_estimates.derived().array() - tau).cwiseMax(Scalar(0));
}

// Consistent real-valued table built by the level-by-level sweep, plus the
// constraint regime it was built under.
struct AdjustedTable {
  CountTable table;
  AdjustMode mode;
};

// Top-down pass: the root keeps its estimate (clamped at zero in the
// non-negative modes), then each family is projected to match its parent.
// Every type column is adjusted independently.
AdjustedTable topdown_sweep(const CountTable& noisy, AdjustMode mode);

// Per-node least squares: finds the detailed histogram best matching every
// noisy workload answer at that node (normal equations; requires the stacked
// workload to have full column rank).
CountTable reconcile_workload(const HierarchyPtr& hier, const TypeSchema& schema,
                              const WorkloadEstimates& estimates);

// Largest-remainder rounding: non-negative integers that sum to total, each
// within 1 of its input whenever the inputs already sum to total.
std::vector<long long> integerize(const Eigen::Ref<const Eigen::VectorXd>& values,
                                  long long total);

struct MiniTopdownResult {
  AdjustedTable adjusted;
  WorkloadLedger ledger;
};

// Small-scale two-stage pipeline: geometric workload noise, per-node workload
// reconciliation, non-negative sweep, then top-down integerization with each
// parent's integer as the family budget.
MiniTopdownResult minitopdown(const CountTable& counts, const Workload& workload,
                              const BudgetAllocation& alloc, std::uint64_t seed);

}  // namespace hierdp
