#include "hierdp/mechanisms.hpp"

#include <cmath>

namespace hierdp {

BudgetAllocation::BudgetAllocation(Eigen::VectorXd levels) : per_level(std::move(levels)) {
  if (per_level.size() == 0) throw InputError("budget allocation needs at least one level");
  if ((per_level.array() < 0).any()) throw InputError("budget levels must be non-negative");
  if (!(per_level.sum() > 0)) throw InputError("total budget must be positive");
}

BudgetAllocation::BudgetAllocation(std::initializer_list<double> levels)
    : BudgetAllocation(Eigen::Map<const Eigen::VectorXd>(levels.begin(),
                                                         static_cast<Eigen::Index>(levels.size()))
                           .eval()) {}

BudgetAllocation BudgetAllocation::equal_split(double epsilon, int depth) {
  if (depth < 1) throw InputError("depth must be >= 1");
  if (!(epsilon > 0)) throw InputError("epsilon must be positive");
  return BudgetAllocation(Eigen::VectorXd::Constant(depth, epsilon / depth));
}

double BudgetAllocation::level(int l) const {
  if (l < 1 || l > depth()) throw InputError("budget level out of range");
  return per_level[l - 1];
}

void BudgetAllocation::require_positive() const {
  if ((per_level.array() <= 0).any())
    throw InputError("every level must hold a positive budget to be noised");
}

Workload Workload::detailed(const TypeSchema& schema) {
  Workload w;
  Histogram h;
  h.name = "detailed";
  for (int t = 0; t < schema.size(); ++t) h.bins.push_back({t});
  w.histograms.push_back(std::move(h));
  w.shares = {1.0};
  return w;
}

Workload Workload::detailed_plus_total(const TypeSchema& schema, double detailed_share) {
  if (!(detailed_share > 0 && detailed_share < 1))
    throw InputError("detailed share must lie in (0,1)");
  Workload w = detailed(schema);
  Histogram total;
  total.name = "total";
  total.bins.emplace_back();
  for (int t = 0; t < schema.size(); ++t) total.bins[0].push_back(t);
  w.histograms.push_back(std::move(total));
  w.shares = {detailed_share, 1.0 - detailed_share};
  return w;
}

void Workload::validate(int type_count) const {
  if (histograms.empty()) throw InputError("workload needs at least one histogram");
  if (shares.size() != histograms.size())
    throw InputError("workload shares must match histograms");
  double sum = 0;
  for (double s : shares) {
    if (!(s > 0)) throw InputError("workload shares must be positive");
    sum += s;
  }
  if (std::abs(sum - 1.0) > 1e-12) throw InputError("workload shares must sum to 1");
  for (const auto& h : histograms) {
    std::vector<char> seen(type_count, 0);
    for (const auto& bin : h.bins) {
      if (bin.empty()) throw InputError("workload bins must be non-empty");
      for (int t : bin) {
        if (t < 0 || t >= type_count || seen[t])
          throw InputError("histogram '" + h.name + "' must partition the types");
        seen[t] = 1;
      }
    }
    for (char c : seen)
      if (!c) throw InputError("histogram '" + h.name + "' must cover every type");
  }
}

double geometric_beta(double share, double eps_level) {
  if (!(share > 0) || !(eps_level > 0))
    throw InputError("geometric beta needs positive share and budget");
  return std::exp(-share * eps_level / kSensitivity);
}

ToydownResult toydown_noise(const CountTable& counts, const BudgetAllocation& alloc,
                            bool multi_attribute, std::uint64_t seed) {
  if (!counts.consistent()) throw InputError("toydown input must be a consistent table");
  const Hierarchy& h = counts.hierarchy();
  if (alloc.depth() != h.depth()) throw InputError("budget depth must match hierarchy depth");
  alloc.require_positive();

  CountTable noisy = multi_attribute ? counts : counts.totals();
  NoiseLedger ledger;
  ledger.seed = seed;
  ledger.type_labels = noisy.schema().labels;
  ledger.draws.resize(h.node_count(), noisy.type_count());
  ledger.budget_per_level = alloc.per_level;

  for (int t = 0; t < noisy.type_count(); ++t) {
    std::uint64_t type_key = hash_label(ledger.type_labels[t]);
    for (NodeId id = 0; id < h.node_count(); ++id) {
      StreamRng rng(derive_stream(seed, static_cast<std::uint64_t>(id), type_key));
      double scale = kSensitivity / alloc.level(h.level(id));
      double draw = sample_laplace(scale, rng);
      ledger.draws(id, t) = draw;
      noisy.at(id, t) += draw;
    }
  }
  noisy.set_consistent(false);
  return {std::move(noisy), std::move(ledger)};
}

WorkloadNoiseResult workload_noise(const CountTable& counts, const Workload& workload,
                                   const BudgetAllocation& alloc, std::uint64_t seed) {
  if (!counts.consistent()) throw InputError("workload noise input must be a consistent table");
  const Hierarchy& h = counts.hierarchy();
  if (alloc.depth() != h.depth()) throw InputError("budget depth must match hierarchy depth");
  alloc.require_positive();
  workload.validate(counts.type_count());

  WorkloadNoiseResult out;
  out.estimates.workload = workload;
  out.ledger.seed = seed;
  out.ledger.budget_per_level = alloc.per_level;
  out.ledger.beta.resize(workload.histograms.size(), h.depth());

  for (size_t q = 0; q < workload.histograms.size(); ++q) {
    const auto& hist = workload.histograms[q];
    int bins = static_cast<int>(hist.bins.size());
    Eigen::MatrixXd values(h.node_count(), bins);
    Eigen::MatrixXd draws(h.node_count(), bins);
    std::uint64_t hist_key = hash_label(hist.name);
    for (int l = 1; l <= h.depth(); ++l)
      out.ledger.beta(static_cast<int>(q), l - 1) = geometric_beta(workload.shares[q], alloc.level(l));
    for (NodeId id = 0; id < h.node_count(); ++id) {
      double beta = out.ledger.beta(static_cast<int>(q), h.level(id) - 1);
      for (int b = 0; b < bins; ++b) {
        StreamRng rng(derive_stream(seed, static_cast<std::uint64_t>(id), hist_key,
                                    static_cast<std::uint64_t>(b)));
        double true_value = 0;
        for (int t : hist.bins[b]) true_value += counts(id, t);
        double draw = static_cast<double>(sample_two_sided_geometric(beta, rng));
        draws(id, b) = draw;
        values(id, b) = true_value + draw;
      }
    }
    out.estimates.values.push_back(std::move(values));
    out.ledger.draws.push_back(std::move(draws));
  }
  return out;
}

}  // namespace hierdp
