#include <cstdio>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "hierdp/analytics.hpp"
#include "hierdp/districts.hpp"
#include "hierdp/er.hpp"
#include "hierdp/io.hpp"

namespace {

using namespace hierdp;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

LoadedCounts counts_from(const std::vector<int>& branching, double leaf_pop,
                         const std::string& counts_path) {
  if (branching.empty() == counts_path.empty())
    throw ConfigError("give exactly one of --branching and --counts");
  if (!branching.empty()) {
    auto [h, t] = build_homogeneous(branching, leaf_pop);
    return {h, std::move(t)};
  }
  return load_counts(counts_path);
}

void add_hierarchy_options(CLI::App* cmd, std::vector<int>& branching, double& leaf_pop,
                           std::string& counts_path) {
  cmd->add_option("--branching", branching, "branching factors below the root")->delimiter(',');
  cmd->add_option("--leaf-pop", leaf_pop, "population of every synthetic leaf");
  cmd->add_option("--counts", counts_path, "counts CSV (unit_path,type,count)");
}

int cmd_gen(CLI::App& app) {
  auto* gen = app.add_subcommand("gen", "write synthetic inputs");

  auto* counts = gen->add_subcommand("counts", "counts CSV for a homogeneous hierarchy");
  static std::vector<int> branching;
  static double leaf_pop = 1.0;
  static std::string out;
  counts->add_option("--branching", branching, "branching factors below the root")
      ->delimiter(',')
      ->required();
  counts->add_option("--leaf-pop", leaf_pop, "population of every leaf");
  counts->add_option("--out", out, "output path")->required();
  counts->callback([] {
    auto [h, t] = build_homogeneous(branching, leaf_pop);
    write_counts_csv(t, out);
    std::cout << "wrote " << out << " (" << h->leaves().size() << " leaves)\n";
  });

  auto* grid = gen->add_subcommand("grid", "counts + rook adjacency for a unit grid");
  static int rows = 10, cols = 10;
  static double cell_pop = 1.0;
  static std::string prefix;
  grid->add_option("--rows", rows, "grid rows")->required();
  grid->add_option("--cols", cols, "grid columns")->required();
  grid->add_option("--pop", cell_pop, "population of every cell");
  grid->add_option("--out-prefix", prefix, "writes <prefix>_counts.csv and <prefix>_adj.csv")
      ->required();
  grid->callback([] {
    if (rows < 1 || cols < 1) throw ConfigError("grid dimensions must be positive");
    auto hier = Hierarchy::from_level_child_counts(
        {{rows * cols}}, [] {
          std::vector<std::string> labels{"grid"};
          for (int r = 0; r < rows; ++r)
            for (int c = 0; c < cols; ++c)
              labels.push_back("cell_" + std::to_string(r) + "_" + std::to_string(c));
          return labels;
        }());
    CountTable leaves(hier, TypeSchema::single());
    for (NodeId leaf : hier->leaves()) leaves.at(leaf, 0) = cell_pop;
    write_counts_csv(aggregate(leaves), prefix + "_counts.csv");
    write_adjacency_csv(grid_adjacency(rows, cols), *hier, prefix + "_adj.csv");
    std::cout << "wrote " << prefix << "_counts.csv and " << prefix << "_adj.csv ("
              << grid_adjacency(rows, cols).edges.size() << " edges)\n";
  });

  auto* er = gen->add_subcommand("er", "synthetic polarized county election CSV");
  static PolarizedCountyParams params;
  static std::uint64_t seed = 0;
  static std::string er_out;
  er->add_option("--precincts", params.precincts, "precinct count");
  er->add_option("--tiny-fraction", params.tiny_fraction, "share of tiny precincts");
  er->add_option("--support-group", params.support_group, "planted support within the group");
  er->add_option("--support-complement", params.support_complement,
                 "planted support outside the group");
  er->add_option("--seed", seed, "generator seed")->required();
  er->add_option("--out", er_out, "output path")->required();
  er->callback([] {
    write_election_csv(make_polarized_county(params, seed), er_out);
    std::cout << "wrote " << er_out << " (" << params.precincts << " precincts)\n";
  });

  gen->require_subcommand(1);
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"hierarchical differential-privacy sandbox"};
  app.require_subcommand(1);

  cmd_gen(app);

  // ---- noise: run the mechanism once or repeatedly and dump tables --------
  auto* noise = app.add_subcommand("noise", "noise a table and write the adjusted values");
  struct {
    std::vector<int> branching;
    double leaf_pop = 1.0;
    std::string counts_path;
    double epsilon = 1.0;
    std::string split = "equal";
    std::vector<double> levels;
    double nation_epsilon = 9.0;
    std::string algorithm = "toydown";
    std::string mode = "unconstrained";
    bool multi = false;
    double detailed_share = 0.1;
    int replicates = 1;
    std::uint64_t seed = 0;
    std::string out;
  } n;
  add_hierarchy_options(noise, n.branching, n.leaf_pop, n.counts_path);
  noise->add_option("--epsilon", n.epsilon, "total sub-national budget");
  noise->add_option("--split", n.split, "equal | explicit | named split");
  noise->add_option("--levels", n.levels, "absolute per-level budgets (split=explicit)")
      ->delimiter(',');
  noise->add_option("--nation-epsilon", n.nation_epsilon, "root budget for named splits");
  noise->add_option("--algorithm", n.algorithm, "toydown | minitopdown");
  noise->add_option("--mode", n.mode, "unconstrained | nonneg | nonneg-integer");
  noise->add_flag("--multi", n.multi, "noise every type; default collapses to totals");
  noise->add_option("--detailed-share", n.detailed_share, "minitopdown detailed share");
  noise->add_option("--replicates", n.replicates, "independent replicates");
  noise->add_option("--seed", n.seed, "base seed")->required();
  noise->add_option("--out", n.out, "output CSV")->required();
  noise->callback([&n] {
    auto lc = counts_from(n.branching, n.leaf_pop, n.counts_path);
    auto alloc = resolve_allocation(n.split, n.levels, n.epsilon, n.nation_epsilon,
                                    lc.hier->depth());
    std::ofstream out(n.out);
    if (!out) throw ConfigError("cannot write '" + n.out + "'");
    out << "replicate,unit_path,type,value\n";
    for (int r = 0; r < n.replicates; ++r) {
      std::uint64_t rep_seed = replicate_seed(n.seed, r);
      AdjustedTable adjusted = [&] {
        if (n.algorithm == "minitopdown") {
          Workload w = lc.table.type_count() > 1
                           ? Workload::detailed_plus_total(lc.table.schema(), n.detailed_share)
                           : Workload::detailed(lc.table.schema());
          return minitopdown(lc.table, w, alloc, rep_seed).adjusted;
        }
        if (n.algorithm != "toydown") throw ConfigError("unknown algorithm '" + n.algorithm + "'");
        auto noised = toydown_noise(lc.table, alloc, n.multi, rep_seed);
        if (n.mode == "nonneg-integer")
          throw ConfigError("integer output needs the minitopdown pipeline");
        return topdown_sweep(noised.noisy, n.mode == "nonneg" ? AdjustMode::kNonNegative
                                                              : AdjustMode::kUnconstrained);
      }();
      const auto& table = adjusted.table;
      for (NodeId id = 0; id < table.hierarchy().node_count(); ++id)
        for (int t = 0; t < table.type_count(); ++t)
          out << r << ',' << table.hierarchy().path(id) << ',' << table.schema().labels[t] << ','
              << fmt(table(id, t)) << '\n';
    }
    std::cout << "wrote " << n.out << "\n";
  });

  // ---- variance: closed-form reports --------------------------------------
  auto* variance = app.add_subcommand("variance", "closed-form error variances");
  struct {
    std::vector<int> branching;
    double epsilon = 1.0;
    std::string split = "equal";
    std::vector<double> levels;
    double nation_epsilon = 9.0;
    std::string curve_out;
    double step = 0.05;
  } v;
  variance->add_option("--branching", v.branching, "branching factors below the root")
      ->delimiter(',')
      ->required();
  variance->add_option("--epsilon", v.epsilon, "total budget");
  variance->add_option("--split", v.split, "equal | explicit | named split");
  variance->add_option("--levels", v.levels, "absolute per-level budgets")->delimiter(',');
  variance->add_option("--nation-epsilon", v.nation_epsilon, "root budget for named splits");
  variance->add_option("--curve", v.curve_out, "write a depth-3 budget sweep CSV here");
  variance->add_option("--step", v.step, "sweep step");
  variance->callback([&v] {
    int depth = static_cast<int>(v.branching.size()) + 1;
    auto alloc = resolve_allocation(v.split, v.levels, v.epsilon, v.nation_epsilon, depth);
    Eigen::VectorXd coeffs = homogeneous_variance_coefficients(v.branching);
    std::cout << "coefficients:";
    for (int l = 0; l < depth; ++l) std::cout << ' ' << fmt(coeffs[l]);
    std::cout << "\nallocation:";
    for (int l = 0; l < depth; ++l) std::cout << ' ' << fmt(alloc.per_level[l]);
    std::cout << "\nblock_variance: " << fmt(block_variance_homogeneous(v.branching, alloc))
              << "\n";
    if (!v.curve_out.empty()) {
      if (v.branching.size() != 2) throw ConfigError("the sweep needs a depth-3 hierarchy");
      std::ofstream out(v.curve_out);
      if (!out) throw ConfigError("cannot write '" + v.curve_out + "'");
      out << "eps1,eps2,eps3,variance\n";
      for (double e1 = v.step; e1 < v.epsilon; e1 += v.step)
        for (double e2 = v.step; e1 + e2 < v.epsilon; e2 += v.step) {
          double e3 = v.epsilon - e1 - e2;
          out << fmt(e1) << ',' << fmt(e2) << ',' << fmt(e3) << ','
              << fmt(block_variance_homogeneous(v.branching, BudgetAllocation({e1, e2, e3})))
              << '\n';
        }
      std::cout << "wrote " << v.curve_out << "\n";
    }
  });

  // ---- allocate: optimal budget split --------------------------------------
  auto* allocate = app.add_subcommand("allocate", "variance-optimal budget split");
  struct {
    std::vector<int> branching;
    double epsilon = 1.0;
  } a;
  allocate->add_option("--branching", a.branching, "branching factors below the root")
      ->delimiter(',')
      ->required();
  allocate->add_option("--epsilon", a.epsilon, "total budget");
  allocate->callback([&a] {
    Eigen::VectorXd coeffs = homogeneous_variance_coefficients(a.branching);
    BudgetAllocation best = optimal_allocation(coeffs, a.epsilon);
    std::cout << "allocation:";
    for (int l = 0; l < best.depth(); ++l) std::cout << ' ' << fmt(best.per_level[l]);
    std::cout << "\nblock_variance: " << fmt(block_variance_homogeneous(a.branching, best))
              << "\n";
  });

  // ---- districts: generate and dump districts ------------------------------
  auto* dist = app.add_subcommand("districts", "generate districts and report Frag");
  struct {
    std::vector<int> branching;
    double leaf_pop = 1.0;
    std::string counts_path;
    std::string method = "greedy";
    int k = 4;
    int count = 1;
    double tolerance = 0.02;
    int recom_steps = 50;
    std::uint64_t seed = 0;
    std::string out;
  } d;
  add_hierarchy_options(dist, d.branching, d.leaf_pop, d.counts_path);
  dist->add_option("--method", d.method, "greedy | square | disconn | recom");
  dist->add_option("--k", d.k, "districts per plan");
  dist->add_option("--count", d.count, "districts to generate");
  dist->add_option("--tolerance", d.tolerance, "population tolerance");
  dist->add_option("--recom-steps", d.recom_steps, "chain steps between samples");
  dist->add_option("--seed", d.seed, "base seed")->required();
  dist->add_option("--out", d.out, "district membership CSV");
  dist->callback([&d] {
    ExperimentConfig cfg;
    cfg.branching = d.branching;
    cfg.leaf_population = d.leaf_pop;
    cfg.counts_path = d.counts_path;
    cfg.district_method = d.method;
    cfg.district_count = d.count;
    cfg.k = d.k;
    cfg.tolerance = d.tolerance;
    cfg.recom_steps = d.recom_steps;
    cfg.seed = d.seed;
    cfg.seed_set = true;
    cfg.replicates = 1;
    cfg.mode = "unconstrained";
    RunReport report = run_experiment(cfg);
    std::cout << "index,frag,predicted_variance\n";
    for (size_t i = 0; i < report.districts.size(); ++i)
      std::cout << i << ',' << fmt(report.districts[i].frag) << ','
                << fmt(report.districts[i].predicted_variance) << '\n';
    if (!d.out.empty()) {
      if (d.method != "greedy" && d.method != "square")
        throw ConfigError("membership dump supports the greedy and square methods");
      // Re-generate the same districts to dump membership (same seeds).
      auto lc = counts_from(d.branching, d.leaf_pop, d.counts_path);
      std::ofstream out(d.out);
      if (!out) throw ConfigError("cannot write '" + d.out + "'");
      out << "district,unit_path\n";
      for (int i = 0; i < d.count; ++i) {
        StreamRng rng(derive_stream(d.seed, hash_label("districts"), i));
        District district = d.method == "square"
                                ? square(lc.hier, PlaneGrid::build(*lc.hier), d.k, rng)
                                : greedy(lc.hier, d.k, rng);
        for (NodeId leaf : district.leaves) out << i << ',' << lc.hier->path(leaf) << '\n';
      }
      std::cout << "wrote " << d.out << "\n";
    }
  });

  // ---- frag: fragmentation score and bounds ---------------------------------
  auto* frag = app.add_subcommand("frag", "fragmentation bounds and sampled scores");
  struct {
    std::vector<int> branching;
    int k = 4;
    int samples = 0;
    std::string method = "square";
    std::uint64_t seed = 0;
  } f;
  frag->add_option("--branching", f.branching, "branching factors below the root")
      ->delimiter(',')
      ->required();
  frag->add_option("--k", f.k, "district count");
  frag->add_option("--samples", f.samples, "sampled districts to average");
  frag->add_option("--method", f.method, "greedy | square");
  frag->add_option("--seed", f.seed, "sampling seed");
  frag->callback([&f] {
    FragBounds bounds = frag_bounds(f.branching, f.k);
    std::cout << "greedy_upper: " << fmt(bounds.greedy_upper) << "\n";
    std::cout << "square_lower: " << fmt(bounds.square_lower) << "\n";
    if (f.samples > 0) {
      auto hier = Hierarchy::homogeneous(f.branching);
      PlaneGrid grid;
      if (f.method == "square") grid = PlaneGrid::build(*hier);
      double total = 0;
      StreamRng rng(f.seed);
      for (int s = 0; s < f.samples; ++s) {
        District d = f.method == "square" ? square(hier, grid, f.k, rng)
                                          : greedy(hier, f.k, rng);
        total += fragmentation(d).score;
      }
      std::cout << "mean_frag(" << f.method << ", " << f.samples
                << " samples): " << fmt(total / f.samples) << "\n";
    }
  });

  // ---- er: replicated noisy regression --------------------------------------
  auto* er = app.add_subcommand("er", "replicated ecological regression under noise");
  struct {
    std::string data;
    std::string noiser = "toydown";
    double epsilon = 1.0;
    double sigma = 0;
    std::string mode = "filtered";
    long long min_votes = 10;
    int replicates = 16;
    std::uint64_t seed = 0;
    std::string out;
  } e;
  er->add_option("--data", e.data, "election CSV")->required();
  er->add_option("--noiser", e.noiser, "toydown | gaussian");
  er->add_option("--epsilon", e.epsilon, "toydown budget (equal split over 2 levels)");
  er->add_option("--sigma", e.sigma, "gaussian noise level");
  er->add_option("--mode", e.mode, "all | filtered | weighted");
  er->add_option("--min-votes", e.min_votes, "vote floor for filtered mode");
  er->add_option("--replicates", e.replicates, "noise replicates");
  er->add_option("--seed", e.seed, "base seed")->required();
  er->add_option("--out", e.out, "per-replicate CSV");
  er->callback([&e] {
    ElectionData data = load_election(e.data);
    ErNoiser noiser = e.noiser == "gaussian"
                          ? ErNoiser::gaussian(e.sigma)
                          : ErNoiser::toydown(BudgetAllocation::equal_split(e.epsilon, 2));
    PrecinctMode mode = e.mode == "all"        ? PrecinctMode::kAll
                        : e.mode == "weighted" ? PrecinctMode::kWeighted
                                               : PrecinctMode::kFiltered;
    ErSummary s = noisy_er_experiment(data, noiser, mode, e.replicates, e.seed, e.min_votes);
    std::cout << "replicates_used: " << s.replicates.size() << "\n";
    std::cout << "fit_failures: " << s.fit_failures << "\n";
    std::cout << "support_group: mean " << fmt(s.mean_group) << " variance " << fmt(s.var_group)
              << " (1e-8 units: " << format_variance_1e8(s.var_group) << ")\n";
    std::cout << "support_complement: mean " << fmt(s.mean_complement) << " variance "
              << fmt(s.var_complement) << " (1e-8 units: " << format_variance_1e8(s.var_complement)
              << ")\n";
    if (!e.out.empty()) {
      std::ofstream out(e.out);
      if (!out) throw ConfigError("cannot write '" + e.out + "'");
      out << "replicate,support_group,support_complement,points,dropped\n";
      for (size_t r = 0; r < s.replicates.size(); ++r)
        out << r << ',' << fmt(s.replicates[r].support_group) << ','
            << fmt(s.replicates[r].support_complement) << ',' << s.replicates[r].points << ','
            << s.replicates[r].dropped << '\n';
      std::cout << "wrote " << e.out << "\n";
    }
  });

  // ---- run: full experiment from a JSON config -------------------------------
  auto* run = app.add_subcommand("run", "run a configured experiment");
  struct {
    std::string config;
    std::uint64_t seed = 0;
    std::string out_dir;
  } r;
  run->add_option("--config", r.config, "experiment JSON")->required();
  run->add_option("--seed", r.seed, "base seed (overrides the config)")->required();
  run->add_option("--out", r.out_dir, "output directory (overrides the config)");
  run->callback([&r] {
    ExperimentConfig cfg = ExperimentConfig::from_json_file(r.config);
    cfg.seed = r.seed;
    cfg.seed_set = true;
    if (!r.out_dir.empty()) cfg.out_dir = r.out_dir;
    if (cfg.out_dir.empty()) throw ConfigError("an output directory is required (--out)");
    RunReport report = run_experiment(cfg);
    write_report(report, cfg.out_dir);
    if (report.errors.size() > 0)
      emit_plotdata(report, "error-hist", cfg.out_dir + "/error_hist.csv");
    if (!report.er_scatter.empty())
      emit_plotdata(report, "er-scatter", cfg.out_dir + "/er_scatter.csv");
    if (!report.curve.empty())
      emit_plotdata(report, "variance-curve", cfg.out_dir + "/variance_curve.csv");
    std::cout << "wrote report under " << cfg.out_dir << "\n";
  });

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const StageError& e) {
    std::cerr << "error in " << e.what() << "\n";
    return 1;
  } catch (const IngestionError& e) {
    std::cerr << "error in stage ingestion: " << e.what() << "\n";
    return 1;
  } catch (const ConfigError& e) {
    std::cerr << "error in stage config: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
