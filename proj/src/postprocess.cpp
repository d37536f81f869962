#include "hierdp/postprocess.hpp"

#include <cmath>

namespace hierdp {

AdjustedTable topdown_sweep(const CountTable& noisy, AdjustMode mode) {
  const Hierarchy& h = noisy.hierarchy();
  if (noisy.values().hasNaN()) throw InputError("sweep input has unset entries");
  bool nonneg = mode != AdjustMode::kUnconstrained;

  CountTable adjusted(noisy.hierarchy_ptr(), noisy.schema());
  for (int t = 0; t < noisy.type_count(); ++t) {
    double root = noisy(0, t);
    adjusted.at(0, t) = nonneg ? std::max(root, 0.0) : root;
  }
  // BFS ids: a forward scan fixes every parent before its children.
  for (NodeId id = 0; id < h.node_count(); ++id) {
    const auto& ch = h.children(id);
    if (ch.empty()) continue;
    Eigen::VectorXd est(ch.size());
    for (int t = 0; t < noisy.type_count(); ++t) {
      for (size_t i = 0; i < ch.size(); ++i) est[i] = noisy(ch[i], t);
      Eigen::VectorXd fitted = nonneg ? project_simplex(est, adjusted(id, t))
                                      : project_children_unconstrained(adjusted(id, t), est);
      for (size_t i = 0; i < ch.size(); ++i) adjusted.at(ch[i], t) = fitted[i];
    }
  }
  adjusted.set_consistent(true);
  return {std::move(adjusted), mode};
}

CountTable reconcile_workload(const HierarchyPtr& hier, const TypeSchema& schema,
                              const WorkloadEstimates& estimates) {
  const Workload& w = estimates.workload;
  w.validate(schema.size());
  if (estimates.values.size() != w.histograms.size())
    throw InputError("workload estimates must cover every histogram");

  int T = schema.size();
  // The stacked design matrix has one row per (histogram, bin); its normal
  // matrix entry (i, j) counts the histograms whose bins join types i and j.
  Eigen::MatrixXd ata = Eigen::MatrixXd::Zero(T, T);
  for (const auto& hist : w.histograms)
    for (const auto& bin : hist.bins)
      for (int i : bin)
        for (int j : bin) ata(i, j) += 1.0;

  Eigen::FullPivLU<Eigen::MatrixXd> lu(ata);
  if (lu.rank() < T)
    throw ConfigError("workload does not determine the detailed histogram (rank " +
                      std::to_string(lu.rank()) + " of " + std::to_string(T) + ")");
  Eigen::LDLT<Eigen::MatrixXd> solver(ata);

  const Hierarchy& h = *hier;
  CountTable out(hier, schema);
  Eigen::VectorXd aty(T);
  for (NodeId id = 0; id < h.node_count(); ++id) {
    aty.setZero();
    for (size_t q = 0; q < w.histograms.size(); ++q) {
      const auto& hist = w.histograms[q];
      const Eigen::MatrixXd& vals = estimates.values[q];
      if (vals.rows() != h.node_count() || vals.cols() != static_cast<int>(hist.bins.size()))
        throw InputError("workload estimate shape mismatch");
      for (size_t b = 0; b < hist.bins.size(); ++b)
        for (int t : hist.bins[b]) aty[t] += vals(id, static_cast<int>(b));
    }
    out.values().row(id) = solver.solve(aty).transpose();
  }
  out.set_consistent(false);
  return out;
}

std::vector<long long> integerize(const Eigen::Ref<const Eigen::VectorXd>& values,
                                  long long total) {
  Eigen::Index n = values.size();
  if (n == 0) throw InputError("integerize needs at least one value");
  if (total < 0) throw InputError("integerize total must be non-negative");
  if ((values.array() < 0).any()) throw InputError("integerize values must be non-negative");
  // The cascade hands each family its parent's rounded total, so allow the
  // inputs to miss it by up to one before calling the request contradictory.
  if (std::abs(values.sum() - static_cast<double>(total)) > 1.0 + 1e-9 * std::abs(values.sum()))
    throw InputError("integerize values must sum to the requested total");

  std::vector<long long> out(n);
  long long floor_sum = 0;
  std::vector<std::pair<double, Eigen::Index>> remainder(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double f = std::floor(values[i]);
    out[i] = static_cast<long long>(f);
    floor_sum += out[i];
    remainder[i] = {values[i] - f, i};
  }
  long long deficit = total - floor_sum;
  if (deficit < 0 || deficit > n)
    throw InputError("integerize values must sum to the requested total");
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (long long k = 0; k < deficit; ++k) ++out[remainder[k].second];
  return out;
}

MiniTopdownResult minitopdown(const CountTable& counts, const Workload& workload,
                              const BudgetAllocation& alloc, std::uint64_t seed) {
  auto noised = workload_noise(counts, workload, alloc, seed);
  CountTable detailed =
      reconcile_workload(counts.hierarchy_ptr(), counts.schema(), noised.estimates);
  AdjustedTable swept = topdown_sweep(detailed, AdjustMode::kNonNegative);

  const Hierarchy& h = counts.hierarchy();
  CountTable integered(counts.hierarchy_ptr(), counts.schema());
  for (int t = 0; t < counts.type_count(); ++t)
    integered.at(0, t) = std::llround(swept.table(0, t));
  for (NodeId id = 0; id < h.node_count(); ++id) {
    const auto& ch = h.children(id);
    if (ch.empty()) continue;
    Eigen::VectorXd est(ch.size());
    for (int t = 0; t < counts.type_count(); ++t) {
      for (size_t i = 0; i < ch.size(); ++i) est[i] = swept.table(ch[i], t);
      std::vector<long long> ints =
          integerize(est, static_cast<long long>(integered(id, t)));
      for (size_t i = 0; i < ch.size(); ++i)
        integered.at(ch[i], t) = static_cast<double>(ints[i]);
    }
  }
  integered.set_consistent(true);
  return {{std::move(integered), AdjustMode::kNonNegativeInteger}, std::move(noised.ledger)};
}

}  // namespace hierdp
