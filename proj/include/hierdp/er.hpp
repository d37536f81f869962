#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hierdp/hierarchy.hpp"
#include "hierdp/mechanisms.hpp"
#include "hierdp/postprocess.hpp"

namespace hierdp {

// One precinct: election totals plus demographic counts by type.  The group
// share x is the first demographic column over the demographic total; the
// candidate share y is candidate votes over votes cast.  Noise touches only
// the demographic counts -- votes are reported exactly.
struct PrecinctRecord {
  std::string id;
  long long votes_cast = 0;
  long long candidate_votes = 0;
  Eigen::VectorXd demographics;

  double group_share() const;      // NaN when the demographic total is <= 0
  double candidate_share() const;  // 0 when no votes were cast
};

struct ElectionData {
  TypeSchema schema;  // first label = group of interest
  std::vector<PrecinctRecord> records;
};

enum class PrecinctMode { kAll, kFiltered, kWeighted };

struct RegressionResult {
  double slope = 0;
  double intercept = 0;
  int points = 0;

  // Fitted candidate support within the group (x = 1) and its complement
  // (x = 0).
  double support_group() const { return intercept + slope; }
  double support_complement() const { return intercept; }
};

// Weighted least squares of y on x.  Needs two positively weighted points
// with distinct x.
RegressionResult fit_ols(const std::vector<double>& x, const std::vector<double>& y,
                         const std::vector<double>* weights = nullptr);

// Keeps precincts with votes_cast >= min_votes.
std::vector<PrecinctRecord> filter_precincts(const std::vector<PrecinctRecord>& records,
                                             long long min_votes);

// Gaussian noise level that matches a target mean L1 error over a b x c count
// table: sigma = mean_l1 * sqrt(pi) / (b * c * sqrt(2)).
double gaussian_sigma(double mean_l1_error, int b, int c);

// Noise model for the replicated experiment: either the hierarchical Laplace
// pipeline on a county -> precinct tree, or independent Gaussians per count.
struct ErNoiser {
  enum class Kind { kToydown, kGaussian };
  Kind kind = Kind::kToydown;
  std::optional<BudgetAllocation> alloc;  // toydown; depth 2
  AdjustMode sweep_mode = AdjustMode::kUnconstrained;
  double sigma = 0;  // gaussian

  static ErNoiser toydown(BudgetAllocation a,
                          AdjustMode mode = AdjustMode::kUnconstrained);
  static ErNoiser gaussian(double sigma);
};

struct ErReplicate {
  double support_group = 0;
  double support_complement = 0;
  int points = 0;
  int dropped = 0;  // precincts whose noised demographic total was <= 0
};

struct ErSummary {
  PrecinctMode mode = PrecinctMode::kAll;
  std::vector<ErReplicate> replicates;
  int fit_failures = 0;
  double mean_group = 0, mean_complement = 0;
  double var_group = 0, var_complement = 0;       // sample variance over replicates
  std::vector<std::array<double, 3>> points;      // replicate, x, y (when kept)
};

// Repeatedly noises the demographic counts, recomputes x, applies the
// precinct mode (votes weight the fit in kWeighted; min_votes gates it in
// kFiltered) and refits.  Precincts whose noised total is not positive are
// dropped from that replicate.
ErSummary noisy_er_experiment(const ElectionData& data, const ErNoiser& noiser,
                              PrecinctMode mode, int replicates, std::uint64_t seed,
                              long long min_votes = 10, bool keep_points = false);

// Formats a variance in units of 1e-8 with two significant digits, e.g.
// 3.61e-4 -> "36000".
std::string format_variance_1e8(double variance);

// Synthetic county with planted polarized support: regular precincts follow
// y = support_complement + (support_group - support_complement) x with small
// jitter; a fraction of precincts are tiny (single-digit votes, a handful of
// residents) and carry no usable signal.
struct PolarizedCountyParams {
  int precincts = 800;
  double tiny_fraction = 0.25;
  double support_group = 0.87;
  double support_complement = 0.48;
  int regular_vap_min = 800, regular_vap_max = 2500;
  int tiny_vap_min = 3, tiny_vap_max = 40;
  double turnout = 0.45;
  double jitter = 0.01;
};

ElectionData make_polarized_county(const PolarizedCountyParams& params, std::uint64_t seed);

}  // namespace hierdp
