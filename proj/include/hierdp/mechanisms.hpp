#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "hierdp/hierarchy.hpp"
#include "hierdp/rng.hpp"

namespace hierdp {

// One person appears in exactly one unit per level and in one type bucket, so
// swapping their record changes two entries of a level histogram by one each.
// Every variance formula derives from this constant; change it here only.
inline constexpr double kSensitivity = 2.0;

// Var of the Laplace noise added to one entry at budget eps: 2 * (k/eps)^2.
inline constexpr double noise_variance(double eps) {
  return 2.0 * (kSensitivity / eps) * (kSensitivity / eps);
}

// Per-level privacy budgets epsilon_1..epsilon_d (level 1 = root).  Levels
// must be non-negative and sum to a positive total; mechanisms additionally
// require every level they touch to be strictly positive.
struct BudgetAllocation {
  Eigen::VectorXd per_level;

  explicit BudgetAllocation(Eigen::VectorXd levels);
  BudgetAllocation(std::initializer_list<double> levels);
  static BudgetAllocation equal_split(double epsilon, int depth);

  int depth() const { return static_cast<int>(per_level.size()); }
  double total() const { return per_level.sum(); }
  double level(int l) const;  // 1-based
  void require_positive() const;
};

// Budgeted collection of histograms over the type schema.  Each histogram
// partitions the types into bins; shares sum to one.
struct Workload {
  struct Histogram {
    std::string name;
    std::vector<std::vector<int>> bins;
  };

  std::vector<Histogram> histograms;
  std::vector<double> shares;

  // Every type in its own bin, share 1.
  static Workload detailed(const TypeSchema& schema);
  // {detailed: detailed_share, total: 1 - detailed_share}.
  static Workload detailed_plus_total(const TypeSchema& schema, double detailed_share);

  void validate(int type_count) const;
};

// Geometric noise parameter for a histogram holding `share` of the level
// budget eps_level: beta = exp(-share * eps_level / sensitivity).
double geometric_beta(double share, double eps_level);

// Record of every draw, addressable by (node, type), plus the budget charged
// per level.  Replays and analytic cross-checks read from here.
struct NoiseLedger {
  std::uint64_t seed = 0;
  Eigen::MatrixXd draws;                 // node x type
  std::vector<std::string> type_labels;  // stream labels, one per column
  Eigen::VectorXd budget_per_level;
};

struct ToydownResult {
  CountTable noisy;
  NoiseLedger ledger;
};

// Adds Laplace(sensitivity / eps_level) noise to every node value.  With
// multi_attribute the per-type columns are noised under their own streams;
// otherwise the table is first collapsed to totals.  Streams are keyed by
// (seed, node, type label), so a one-type slice of a multi-attribute run
// reproduces that type's draws exactly.
ToydownResult toydown_noise(const CountTable& counts, const BudgetAllocation& alloc,
                            bool multi_attribute, std::uint64_t seed);

// Integer geometric draws per (node, histogram, bin) and the beta actually
// used per (histogram, level).
struct WorkloadLedger {
  std::uint64_t seed = 0;
  std::vector<Eigen::MatrixXd> draws;  // per histogram: node x bin
  Eigen::MatrixXd beta;                // histogram x level
  Eigen::VectorXd budget_per_level;
};

struct WorkloadEstimates {
  Workload workload;
  std::vector<Eigen::MatrixXd> values;  // per histogram: node x bin
};

struct WorkloadNoiseResult {
  WorkloadEstimates estimates;
  WorkloadLedger ledger;
};

// Noises every workload query at every node with two-sided geometric noise at
// beta = exp(-share * eps_level / sensitivity).
WorkloadNoiseResult workload_noise(const CountTable& counts, const Workload& workload,
                                   const BudgetAllocation& alloc, std::uint64_t seed);

// Stream seed for replicate r of a multi-replicate experiment.
inline std::uint64_t replicate_seed(std::uint64_t seed, int replicate) {
  return derive_stream(seed, 0x7265706cULL, static_cast<std::uint64_t>(replicate));
}

}  // namespace hierdp
