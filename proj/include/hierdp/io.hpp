#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "hierdp/analytics.hpp"
#include "hierdp/districts.hpp"
#include "hierdp/er.hpp"
#include "hierdp/hierarchy.hpp"
#include "hierdp/mechanisms.hpp"
#include "hierdp/postprocess.hpp"

namespace hierdp {

// File formats (plain CSV, no quoting; labels must avoid ',' and '/'):
//   counts:    unit_path,type,count     leaf rows required, internal optional
//   adjacency: unit_a,unit_b            full unit paths of leaves
//   election:  precinct,votes_cast,candidate_votes,<type1>,<type2>,...
// Counts must be non-negative integers; provided internal rows must equal the
// sum of their leaves.  unit_path joins node labels with '/'.

struct LoadedCounts {
  HierarchyPtr hier;
  CountTable table;
};

LoadedCounts load_counts(const std::string& path);
void write_counts_csv(const CountTable& table, const std::string& path);

// Adjacency over leaf ordinals (position within hierarchy().leaves()).
Adjacency load_adjacency(const std::string& path, const Hierarchy& hier);
void write_adjacency_csv(const Adjacency& adjacency, const Hierarchy& hier,
                         const std::string& path);

ElectionData load_election(const std::string& path);
void write_election_csv(const ElectionData& data, const std::string& path);

// Budget fractions of the five sub-national levels: equal, state-heavy,
// tract-heavy, bg-heavy, block-heavy.
Eigen::VectorXd named_split(const std::string& name);

// "explicit" takes absolute per-level budgets.  The five named splits
// describe six-level hierarchies, spending nation_epsilon at the root and the
// named fractions of epsilon below it; at any other depth "equal" divides
// epsilon evenly across all levels instead.
BudgetAllocation resolve_allocation(const std::string& split,
                                    const std::vector<double>& explicit_levels, double epsilon,
                                    double nation_epsilon, int depth);

struct ExperimentConfig {
  // Exactly one source: synthetic branching or a counts file.
  std::vector<int> branching;
  double leaf_population = 1.0;
  std::string counts_path;

  double epsilon = 1.0;
  std::string split = "equal";
  std::vector<double> split_levels;
  double nation_epsilon = 9.0;

  std::string algorithm = "toydown";  // toydown | minitopdown
  bool multi_attribute = false;
  std::string mode = "unconstrained";  // unconstrained | nonneg | nonneg-integer
  double workload_detailed_share = 0.1;

  int replicates = 16;
  std::uint64_t seed = 0;
  bool seed_set = false;

  std::string district_method = "none";  // none | greedy | square | disconn | recom
  int district_count = 0;
  int k = 4;
  double tolerance = 0.02;
  int recom_steps = 50;  // chain steps between samples

  bool er_enabled = false;
  std::string er_data_path;  // empty -> synthetic polarized county
  std::string er_noiser = "toydown";
  double er_sigma = 0;
  double er_epsilon = 1.0;
  std::string er_mode = "filtered";  // all | filtered | weighted
  long long er_min_votes = 10;

  bool variance_curve = false;  // depth-3 budget sweep of the block variance
  double curve_step = 0.05;

  std::string out_dir;

  static ExperimentConfig from_json_file(const std::string& path);
  static ExperimentConfig from_json_text(const std::string& text);
  std::string to_json() const;
  void validate() const;
};

struct DistrictStats {
  double frag = 0;
  double predicted_variance = 0;
  double empirical_variance = 0;
  double mean_error = 0;
  double mean_abs_error = 0;
};

struct RunReport {
  ExperimentConfig config;
  BudgetAllocation allocation{Eigen::VectorXd::Ones(1)};
  int nodes = 0, leaves = 0, depth = 0;
  std::vector<DistrictStats> districts;
  Eigen::MatrixXd errors;  // replicate x district
  Eigen::VectorXd l1;      // per replicate
  std::optional<ErSummary> er;
  std::vector<std::array<double, 3>> er_scatter;  // replicate, x, y
  std::vector<std::array<double, 4>> curve;       // eps1, eps2, eps3, variance
};

// Names the phase an error escaped from; the CLI reports it verbatim.
class StageError : public std::runtime_error {
 public:
  StageError(std::string stage, const std::string& what)
      : std::runtime_error("stage " + stage + ": " + what), stage_(std::move(stage)) {}
  const std::string& stage() const { return stage_; }

 private:
  std::string stage_;
};

// Runs the configured experiment: noising replicates, district metrics,
// optional regression study.  Deterministic given (config, seed): re-running
// writes byte-identical reports.
RunReport run_experiment(const ExperimentConfig& config);

// Writes report.txt, district_errors.csv, l1.csv and, when present,
// er_replicates.csv under dir (created if needed).
void write_report(const RunReport& report, const std::string& dir);

// kinds: error-hist | er-scatter | variance-curve.
void emit_plotdata(const RunReport& report, const std::string& kind, const std::string& path);

}  // namespace hierdp
