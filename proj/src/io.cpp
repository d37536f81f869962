#include "hierdp/io.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <unordered_map>
#include <unordered_set>

#include "json.hpp"

namespace hierdp {

namespace {

using nlohmann::json;

std::string fmt(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

std::vector<std::string> split(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : line) {
    if (c == sep) {
      out.push_back(cur);
      cur.clear();
    } else {
      cur += c;
    }
  }
  out.push_back(cur);
  return out;
}

std::vector<std::string> read_lines(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IngestionError("cannot open '" + path + "'");
  std::vector<std::string> lines;
  std::string line;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    lines.push_back(line);
  }
  return lines;
}

// Counts are non-negative integers; values arrive as decimal text.
double parse_count(const std::string& s, const std::string& path, int line) {
  double v;
  try {
    size_t used;
    v = std::stod(s, &used);
    if (used != s.size()) throw std::invalid_argument(s);
  } catch (const std::exception&) {
    throw IngestionError(path, line, "count '" + s + "' is not a number");
  }
  if (!std::isfinite(v) || v < 0 || v != std::floor(v))
    throw IngestionError(path, line, "count '" + s + "' must be a non-negative integer");
  return v;
}

std::ofstream open_out(const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IngestionError("cannot write '" + path + "'");
  return out;
}

}  // namespace

LoadedCounts load_counts(const std::string& path) {
  auto lines = read_lines(path);
  if (lines.empty() || split(lines[0], ',') != std::vector<std::string>{"unit_path", "type", "count"})
    throw IngestionError(path, 1, "expected header 'unit_path,type,count'");

  struct TrieNode {
    std::string label;
    int depth;
    std::vector<int> children;
    std::unordered_map<std::string, int> by_label;
  };
  std::vector<TrieNode> trie;
  struct Row {
    int node;
    int type;
    double value;
    int line;
    int depth;
  };
  std::vector<Row> rows;
  std::vector<std::string> type_labels;
  std::unordered_map<std::string, int> type_index;
  int max_depth = 0;

  for (size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    int line_no = static_cast<int>(ln) + 1;
    auto fields = split(lines[ln], ',');
    if (fields.size() != 3) throw IngestionError(path, line_no, "expected 3 fields");
    auto segments = split(fields[0], '/');
    for (const auto& s : segments)
      if (s.empty()) throw IngestionError(path, line_no, "empty unit label in path");

    if (trie.empty()) {
      trie.push_back({segments[0], 1, {}, {}});
    } else if (trie[0].label != segments[0]) {
      throw IngestionError(path, line_no, "paths disagree on the root label");
    }
    int node = 0;
    for (size_t i = 1; i < segments.size(); ++i) {
      auto it = trie[node].by_label.find(segments[i]);
      if (it == trie[node].by_label.end()) {
        int id = static_cast<int>(trie.size());
        trie.push_back({segments[i], static_cast<int>(i) + 1, {}, {}});
        trie[node].by_label.emplace(segments[i], id);
        trie[node].children.push_back(id);
        node = id;
      } else {
        node = it->second;
      }
    }

    const std::string& tlabel = fields[1];
    if (tlabel.empty()) throw IngestionError(path, line_no, "empty type label");
    auto [it, inserted] = type_index.emplace(tlabel, static_cast<int>(type_labels.size()));
    if (inserted) type_labels.push_back(tlabel);

    int depth = static_cast<int>(segments.size());
    max_depth = std::max(max_depth, depth);
    rows.push_back({node, it->second, parse_count(fields[2], path, line_no), line_no, depth});
  }
  if (rows.empty()) throw IngestionError(path, 1, "no data rows");

  // Every shallower node must be internal, otherwise leaves sit at different
  // depths and the tree is ragged.
  for (const auto& node : trie)
    if (node.depth < max_depth && node.children.empty())
      throw IngestionError(path, 1, "unit '" + node.label + "' has no children but depth " +
                                        std::to_string(max_depth) + " leaves exist elsewhere");

  // Relabel the trie in BFS order, keeping per-parent insertion order.
  std::vector<int> bfs{0};
  std::vector<int> trie_to_id(trie.size(), -1);
  trie_to_id[0] = 0;
  for (size_t i = 0; i < bfs.size(); ++i)
    for (int c : trie[bfs[i]].children) {
      trie_to_id[c] = static_cast<int>(bfs.size());
      bfs.push_back(c);
    }
  std::vector<std::vector<int>> counts_per_level(max_depth - 1);
  std::vector<std::string> labels(trie.size());
  for (size_t i = 0; i < bfs.size(); ++i) {
    const auto& node = trie[bfs[i]];
    labels[i] = node.label;
    if (node.depth < max_depth)
      counts_per_level[node.depth - 1].push_back(static_cast<int>(node.children.size()));
  }
  auto hier = Hierarchy::from_level_child_counts(counts_per_level, labels);

  CountTable leaf_values(hier, TypeSchema(type_labels));
  for (NodeId leaf : hier->leaves()) leaf_values.values().row(leaf).setZero();
  std::unordered_set<long long> seen;
  std::vector<Row> internal_rows;
  int T = static_cast<int>(type_labels.size());
  for (const auto& row : rows) {
    NodeId id = trie_to_id[row.node];
    if (!seen.insert(static_cast<long long>(id) * T + row.type).second)
      throw IngestionError(path, row.line, "duplicate (unit, type) row");
    if (row.depth == max_depth)
      leaf_values.at(id, row.type) = row.value;
    else
      internal_rows.push_back({id, row.type, row.value, row.line, row.depth});
  }

  CountTable table = aggregate(leaf_values);
  for (const auto& row : internal_rows)
    if (std::abs(table(row.node, row.type) - row.value) > 1e-9)
      throw IngestionError(path, row.line,
                           "internal count " + fmt(row.value) + " disagrees with leaf sum " +
                               fmt(table(row.node, row.type)));
  return {hier, std::move(table)};
}

void write_counts_csv(const CountTable& table, const std::string& path) {
  auto out = open_out(path);
  out << "unit_path,type,count\n";
  for (NodeId leaf : table.hierarchy().leaves())
    for (int t = 0; t < table.type_count(); ++t)
      out << table.hierarchy().path(leaf) << ',' << table.schema().labels[t] << ','
          << fmt(table(leaf, t)) << '\n';
}

Adjacency load_adjacency(const std::string& path, const Hierarchy& hier) {
  auto lines = read_lines(path);
  if (lines.empty() || split(lines[0], ',') != std::vector<std::string>{"unit_a", "unit_b"})
    throw IngestionError(path, 1, "expected header 'unit_a,unit_b'");

  std::unordered_map<std::string, int> ordinal;
  const auto& leaves = hier.leaves();
  for (size_t i = 0; i < leaves.size(); ++i) ordinal.emplace(hier.path(leaves[i]), static_cast<int>(i));

  std::vector<std::pair<int, int>> edges;
  for (size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    int line_no = static_cast<int>(ln) + 1;
    auto fields = split(lines[ln], ',');
    if (fields.size() != 2) throw IngestionError(path, line_no, "expected 2 fields");
    auto a = ordinal.find(fields[0]);
    auto b = ordinal.find(fields[1]);
    if (a == ordinal.end())
      throw IngestionError(path, line_no, "unknown unit '" + fields[0] + "'");
    if (b == ordinal.end())
      throw IngestionError(path, line_no, "unknown unit '" + fields[1] + "'");
    if (a->second == b->second)
      throw IngestionError(path, line_no, "unit '" + fields[0] + "' is adjacent to itself");
    edges.emplace_back(a->second, b->second);
  }
  return Adjacency::from_edges(static_cast<int>(leaves.size()), std::move(edges));
}

void write_adjacency_csv(const Adjacency& adjacency, const Hierarchy& hier,
                         const std::string& path) {
  const auto& leaves = hier.leaves();
  if (adjacency.n != static_cast<int>(leaves.size()))
    throw InputError("adjacency does not cover the hierarchy's leaves");
  auto out = open_out(path);
  out << "unit_a,unit_b\n";
  for (auto [a, b] : adjacency.edges)
    out << hier.path(leaves[a]) << ',' << hier.path(leaves[b]) << '\n';
}

ElectionData load_election(const std::string& path) {
  auto lines = read_lines(path);
  if (lines.empty()) throw IngestionError(path, 1, "empty file");
  auto header = split(lines[0], ',');
  if (header.size() < 4 || header[0] != "precinct" || header[1] != "votes_cast" ||
      header[2] != "candidate_votes")
    throw IngestionError(path, 1,
                         "expected header 'precinct,votes_cast,candidate_votes,<types...>'");
  ElectionData data{TypeSchema(std::vector<std::string>(header.begin() + 3, header.end())), {}};
  int T = data.schema.size();

  std::unordered_set<std::string> seen;
  for (size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    int line_no = static_cast<int>(ln) + 1;
    auto fields = split(lines[ln], ',');
    if (fields.size() != header.size())
      throw IngestionError(path, line_no, "expected " + std::to_string(header.size()) + " fields");
    if (!seen.insert(fields[0]).second)
      throw IngestionError(path, line_no, "duplicate precinct '" + fields[0] + "'");
    PrecinctRecord rec;
    rec.id = fields[0];
    rec.votes_cast = static_cast<long long>(parse_count(fields[1], path, line_no));
    rec.candidate_votes = static_cast<long long>(parse_count(fields[2], path, line_no));
    if (rec.candidate_votes > rec.votes_cast)
      throw IngestionError(path, line_no, "candidate votes exceed votes cast");
    rec.demographics.resize(T);
    for (int t = 0; t < T; ++t) rec.demographics[t] = parse_count(fields[3 + t], path, line_no);
    if (!(rec.demographics.sum() > 0))
      throw IngestionError(path, line_no, "precinct has no population");
    data.records.push_back(std::move(rec));
  }
  if (data.records.empty()) throw IngestionError(path, 1, "no data rows");
  return data;
}

void write_election_csv(const ElectionData& data, const std::string& path) {
  auto out = open_out(path);
  out << "precinct,votes_cast,candidate_votes";
  for (const auto& label : data.schema.labels) out << ',' << label;
  out << '\n';
  for (const auto& rec : data.records) {
    out << rec.id << ',' << rec.votes_cast << ',' << rec.candidate_votes;
    for (int t = 0; t < data.schema.size(); ++t) out << ',' << fmt(rec.demographics[t]);
    out << '\n';
  }
}

Eigen::VectorXd named_split(const std::string& name) {
  auto vec = [](std::initializer_list<double> v) {
    return Eigen::Map<const Eigen::VectorXd>(v.begin(), static_cast<Eigen::Index>(v.size()))
        .eval();
  };
  if (name == "equal") return vec({0.2, 0.2, 0.2, 0.2, 0.2});
  if (name == "state-heavy") return vec({0.5, 0.25, 0.083, 0.083, 0.083});
  if (name == "tract-heavy") return vec({0.083, 0.167, 0.5, 0.167, 0.083});
  if (name == "bg-heavy") return vec({0.083, 0.083, 0.167, 0.5, 0.167});
  if (name == "block-heavy") return vec({0.083, 0.083, 0.083, 0.25, 0.5});
  throw ConfigError("unknown split '" + name +
                    "' (expected equal, state-heavy, tract-heavy, bg-heavy, block-heavy)");
}

BudgetAllocation resolve_allocation(const std::string& split,
                                    const std::vector<double>& explicit_levels, double epsilon,
                                    double nation_epsilon, int depth) {
  if (split == "explicit") {
    if (static_cast<int>(explicit_levels.size()) != depth)
      throw ConfigError("explicit split needs one budget per level (" + std::to_string(depth) +
                        ")");
    return BudgetAllocation(Eigen::Map<const Eigen::VectorXd>(
                                explicit_levels.data(),
                                static_cast<Eigen::Index>(explicit_levels.size()))
                                .eval());
  }
  if (split == "equal" && depth != 6) return BudgetAllocation::equal_split(epsilon, depth);
  Eigen::VectorXd fractions = named_split(split);
  if (depth != fractions.size() + 1)
    throw ConfigError("split '" + split + "' describes " + std::to_string(fractions.size()) +
                      " sub-national levels and needs a depth-" +
                      std::to_string(fractions.size() + 1) + " hierarchy");
  Eigen::VectorXd levels(depth);
  levels[0] = nation_epsilon;
  levels.tail(fractions.size()) = epsilon * fractions;
  return BudgetAllocation(std::move(levels));
}

namespace {

const std::set<std::string>& allowed_keys(const std::string& section) {
  static const std::map<std::string, std::set<std::string>> keys = {
      {"", {"hierarchy", "budget", "noising", "replicates", "seed", "districts", "er", "plots",
            "out_dir"}},
      {"hierarchy", {"branching", "leaf_population", "counts"}},
      {"budget", {"epsilon", "split", "levels", "nation_epsilon"}},
      {"noising", {"algorithm", "multi_attribute", "mode", "workload_detailed_share"}},
      {"districts", {"method", "count", "k", "tolerance", "recom_steps"}},
      {"er", {"data", "noiser", "sigma", "epsilon", "mode", "min_votes"}},
      {"plots", {"variance_curve", "curve_step"}},
  };
  return keys.at(section);
}

void check_keys(const json& j, const std::string& section) {
  for (auto it = j.begin(); it != j.end(); ++it)
    if (!allowed_keys(section).count(it.key()))
      throw ConfigError("unknown config key '" +
                        (section.empty() ? it.key() : section + "." + it.key()) + "'");
}

}  // namespace

ExperimentConfig ExperimentConfig::from_json_text(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const std::exception& e) {
    throw ConfigError(std::string("config is not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ConfigError("config must be a JSON object");
  check_keys(j, "");

  ExperimentConfig c;
  try {
    if (j.contains("hierarchy")) {
      const json& h = j["hierarchy"];
      check_keys(h, "hierarchy");
      if (h.contains("branching")) c.branching = h["branching"].get<std::vector<int>>();
      if (h.contains("leaf_population")) c.leaf_population = h["leaf_population"].get<double>();
      if (h.contains("counts")) c.counts_path = h["counts"].get<std::string>();
    }
    if (j.contains("budget")) {
      const json& b = j["budget"];
      check_keys(b, "budget");
      if (b.contains("epsilon")) c.epsilon = b["epsilon"].get<double>();
      if (b.contains("split")) c.split = b["split"].get<std::string>();
      if (b.contains("levels")) c.split_levels = b["levels"].get<std::vector<double>>();
      if (b.contains("nation_epsilon")) c.nation_epsilon = b["nation_epsilon"].get<double>();
    }
    if (j.contains("noising")) {
      const json& n = j["noising"];
      check_keys(n, "noising");
      if (n.contains("algorithm")) c.algorithm = n["algorithm"].get<std::string>();
      if (n.contains("multi_attribute")) c.multi_attribute = n["multi_attribute"].get<bool>();
      if (n.contains("mode")) c.mode = n["mode"].get<std::string>();
      if (n.contains("workload_detailed_share"))
        c.workload_detailed_share = n["workload_detailed_share"].get<double>();
    }
    if (j.contains("replicates")) c.replicates = j["replicates"].get<int>();
    if (j.contains("seed")) {
      c.seed = j["seed"].get<std::uint64_t>();
      c.seed_set = true;
    }
    if (j.contains("districts")) {
      const json& d = j["districts"];
      check_keys(d, "districts");
      if (d.contains("method")) c.district_method = d["method"].get<std::string>();
      if (d.contains("count")) c.district_count = d["count"].get<int>();
      if (d.contains("k")) c.k = d["k"].get<int>();
      if (d.contains("tolerance")) c.tolerance = d["tolerance"].get<double>();
      if (d.contains("recom_steps")) c.recom_steps = d["recom_steps"].get<int>();
    }
    if (j.contains("er")) {
      const json& e = j["er"];
      check_keys(e, "er");
      c.er_enabled = true;
      if (e.contains("data")) c.er_data_path = e["data"].get<std::string>();
      if (e.contains("noiser")) c.er_noiser = e["noiser"].get<std::string>();
      if (e.contains("sigma")) c.er_sigma = e["sigma"].get<double>();
      if (e.contains("epsilon")) c.er_epsilon = e["epsilon"].get<double>();
      if (e.contains("mode")) c.er_mode = e["mode"].get<std::string>();
      if (e.contains("min_votes")) c.er_min_votes = e["min_votes"].get<long long>();
    }
    if (j.contains("plots")) {
      const json& p = j["plots"];
      check_keys(p, "plots");
      if (p.contains("variance_curve")) c.variance_curve = p["variance_curve"].get<bool>();
      if (p.contains("curve_step")) c.curve_step = p["curve_step"].get<double>();
    }
    if (j.contains("out_dir")) c.out_dir = j["out_dir"].get<std::string>();
  } catch (const json::exception& e) {
    throw ConfigError(std::string("config field has the wrong type: ") + e.what());
  }
  return c;
}

ExperimentConfig ExperimentConfig::from_json_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config '" + path + "'");
  std::stringstream ss;
  ss << in.rdbuf();
  return from_json_text(ss.str());
}

std::string ExperimentConfig::to_json() const {
  json j;
  if (!branching.empty()) {
    j["hierarchy"]["branching"] = branching;
    j["hierarchy"]["leaf_population"] = leaf_population;
  } else {
    j["hierarchy"]["counts"] = counts_path;
  }
  j["budget"]["epsilon"] = epsilon;
  j["budget"]["split"] = split;
  if (!split_levels.empty()) j["budget"]["levels"] = split_levels;
  j["budget"]["nation_epsilon"] = nation_epsilon;
  j["noising"]["algorithm"] = algorithm;
  j["noising"]["multi_attribute"] = multi_attribute;
  j["noising"]["mode"] = mode;
  j["noising"]["workload_detailed_share"] = workload_detailed_share;
  j["replicates"] = replicates;
  if (seed_set) j["seed"] = seed;
  j["districts"]["method"] = district_method;
  j["districts"]["count"] = district_count;
  j["districts"]["k"] = k;
  j["districts"]["tolerance"] = tolerance;
  j["districts"]["recom_steps"] = recom_steps;
  if (er_enabled) {
    j["er"]["data"] = er_data_path;
    j["er"]["noiser"] = er_noiser;
    j["er"]["sigma"] = er_sigma;
    j["er"]["epsilon"] = er_epsilon;
    j["er"]["mode"] = er_mode;
    j["er"]["min_votes"] = er_min_votes;
  }
  j["plots"]["variance_curve"] = variance_curve;
  j["plots"]["curve_step"] = curve_step;
  if (!out_dir.empty()) j["out_dir"] = out_dir;
  return j.dump(2);
}

void ExperimentConfig::validate() const {
  if (branching.empty() == counts_path.empty())
    throw ConfigError("exactly one of hierarchy.branching and hierarchy.counts is required");
  if (!(epsilon > 0)) throw ConfigError("budget.epsilon must be positive");
  if (replicates < 1) throw ConfigError("replicates must be >= 1");
  if (!seed_set) throw ConfigError("seed is required");
  if (algorithm != "toydown" && algorithm != "minitopdown")
    throw ConfigError("noising.algorithm must be toydown or minitopdown");
  if (mode != "unconstrained" && mode != "nonneg" && mode != "nonneg-integer")
    throw ConfigError("noising.mode must be unconstrained, nonneg or nonneg-integer");
  if (algorithm == "minitopdown" && mode != "nonneg-integer")
    throw ConfigError("minitopdown always produces nonneg-integer tables");
  if (algorithm == "toydown" && mode == "nonneg-integer")
    throw ConfigError("integer output needs the minitopdown pipeline");
  if (!(workload_detailed_share > 0 && workload_detailed_share < 1))
    throw ConfigError("noising.workload_detailed_share must lie in (0,1)");
  if (district_method != "none" && district_method != "greedy" && district_method != "square" &&
      district_method != "disconn" && district_method != "recom")
    throw ConfigError("districts.method must be none, greedy, square, disconn or recom");
  if (district_method != "none") {
    if (district_count < 1) throw ConfigError("districts.count must be >= 1");
    if (k < 1) throw ConfigError("districts.k must be >= 1");
    if (tolerance < 0) throw ConfigError("districts.tolerance must be non-negative");
    if (district_method == "recom" && (k < 2 || recom_steps < 1))
      throw ConfigError("recom needs k >= 2 and districts.recom_steps >= 1");
  }
  if (er_enabled) {
    if (er_noiser != "toydown" && er_noiser != "gaussian")
      throw ConfigError("er.noiser must be toydown or gaussian");
    if (er_mode != "all" && er_mode != "filtered" && er_mode != "weighted")
      throw ConfigError("er.mode must be all, filtered or weighted");
    if (er_noiser == "toydown" && !(er_epsilon > 0))
      throw ConfigError("er.epsilon must be positive");
    if (er_noiser == "gaussian" && er_sigma < 0)
      throw ConfigError("er.sigma must be non-negative");
    if (er_min_votes < 0) throw ConfigError("er.min_votes must be non-negative");
  }
  if (variance_curve && !(curve_step > 0 && curve_step < 0.5))
    throw ConfigError("plots.curve_step must lie in (0, 0.5)");
}

namespace {

template <typename F>
auto with_stage(const char* name, F&& f) -> decltype(f()) {
  try {
    return f();
  } catch (const StageError&) {
    throw;
  } catch (const std::exception& e) {
    throw StageError(name, e.what());
  }
}

std::vector<District> generate_districts(const ExperimentConfig& config, const HierarchyPtr& hier,
                                         const CountTable& counts) {
  std::vector<District> districts;
  if (config.district_method == "none") return districts;
  std::uint64_t tag = hash_label("districts");
  CountTable totals = counts.totals();

  if (config.district_method == "greedy") {
    for (int i = 0; i < config.district_count; ++i) {
      StreamRng rng(derive_stream(config.seed, tag, static_cast<std::uint64_t>(i)));
      districts.push_back(greedy(hier, config.k, rng));
    }
  } else if (config.district_method == "square") {
    PlaneGrid grid = PlaneGrid::build(*hier);
    for (int i = 0; i < config.district_count; ++i) {
      StreamRng rng(derive_stream(config.seed, tag, static_cast<std::uint64_t>(i)));
      districts.push_back(square(hier, grid, config.k, rng));
    }
  } else if (config.district_method == "disconn") {
    std::vector<std::pair<NodeId, double>> units;
    double total = 0;
    for (NodeId leaf : hier->leaves()) {
      units.emplace_back(leaf, totals(leaf, 0));
      total += totals(leaf, 0);
    }
    for (int i = 0; i < config.district_count; ++i) {
      std::optional<std::vector<NodeId>> picked;
      for (int attempt = 0; attempt < 100 && !picked; ++attempt) {
        StreamRng rng(derive_stream(config.seed, tag, static_cast<std::uint64_t>(i),
                                    static_cast<std::uint64_t>(attempt)));
        picked = disconn(units, total / config.k, config.tolerance, rng);
      }
      if (!picked)
        throw ConfigError("disconn failed to reach the population window in 100 attempts");
      districts.push_back(district_weights(hier, leaves_under(*hier, *picked)));
    }
  } else {  // recom over the grid embedding
    PlaneGrid grid = PlaneGrid::build(*hier);
    int side = grid.side;
    Adjacency adj = grid_adjacency(side, side);
    std::vector<double> pops(static_cast<size_t>(side) * side, 0.0);
    for (size_t cell = 0; cell < pops.size(); ++cell)
      pops[cell] = totals(grid.leaf_at[cell], 0);
    Partition part = grid_stripes_partition(side, side, config.k);
    std::string why;
    if (!partition_valid(part, adj, pops, config.tolerance, &why))
      throw ConfigError("initial stripes partition is invalid: " + why);
    StreamRng chain(derive_stream(config.seed, tag));
    for (int i = 0; i < config.district_count; ++i) {
      for (int s = 0; s < config.recom_steps; ++s)
        recom_step(part, adj, pops, config.tolerance, chain);
      std::vector<NodeId> members;
      for (size_t cell = 0; cell < pops.size(); ++cell)
        if (part.assignment[cell] == i % config.k) members.push_back(grid.leaf_at[cell]);
      districts.push_back(district_weights(hier, std::move(members)));
    }
  }
  return districts;
}

}  // namespace

RunReport run_experiment(const ExperimentConfig& config) {
  with_stage("config", [&] { config.validate(); });

  RunReport report;
  report.config = config;

  LoadedCounts lc = with_stage("hierarchy", [&] {
    if (!config.branching.empty()) {
      auto [h, t] = build_homogeneous(config.branching, config.leaf_population);
      return LoadedCounts{h, std::move(t)};
    }
    return load_counts(config.counts_path);
  });
  report.nodes = lc.hier->node_count();
  report.leaves = static_cast<int>(lc.hier->leaves().size());
  report.depth = lc.hier->depth();

  report.allocation = with_stage("allocation", [&] {
    return resolve_allocation(config.split, config.split_levels, config.epsilon,
                              config.nation_epsilon, lc.hier->depth());
  });

  std::vector<District> districts =
      with_stage("districts", [&] { return generate_districts(config, lc.hier, lc.table); });

  with_stage("noising", [&] {
    bool multi = config.algorithm == "minitopdown" || config.multi_attribute;
    CountTable baseline = multi ? lc.table : lc.table.totals();
    int D = static_cast<int>(districts.size());
    report.errors.resize(config.replicates, D);
    report.l1.resize(config.replicates);
    Workload workload = lc.table.type_count() > 1
                            ? Workload::detailed_plus_total(lc.table.schema(),
                                                            config.workload_detailed_share)
                            : Workload::detailed(lc.table.schema());

    for (int r = 0; r < config.replicates; ++r) {
      std::uint64_t rep_seed = replicate_seed(config.seed, r);
      AdjustedTable adjusted = [&] {
        if (config.algorithm == "minitopdown")
          return minitopdown(lc.table, workload, report.allocation, rep_seed).adjusted;
        auto noised = toydown_noise(lc.table, report.allocation, config.multi_attribute, rep_seed);
        return topdown_sweep(noised.noisy, config.mode == "nonneg"
                                               ? AdjustMode::kNonNegative
                                               : AdjustMode::kUnconstrained);
      }();
      report.l1[r] = l1_error(baseline, adjusted.table);
      for (int d = 0; d < D; ++d) {
        double err = 0;
        for (NodeId leaf : districts[d].leaves)
          err += adjusted.table.values().row(leaf).sum() - baseline.values().row(leaf).sum();
        report.errors(r, d) = err;
      }
    }
  });

  with_stage("analysis", [&] {
    for (size_t d = 0; d < districts.size(); ++d) {
      DistrictStats stats;
      stats.frag = fragmentation(districts[d]).score;
      stats.predicted_variance = district_error_variance(districts[d], report.allocation).total;
      Eigen::VectorXd col = report.errors.col(static_cast<Eigen::Index>(d));
      stats.mean_error = col.mean();
      stats.mean_abs_error = col.cwiseAbs().mean();
      if (config.replicates > 1)
        stats.empirical_variance =
            (col.array() - stats.mean_error).square().sum() / (config.replicates - 1);
      report.districts.push_back(stats);
    }
  });

  if (config.er_enabled) {
    with_stage("er", [&] {
      ElectionData data = config.er_data_path.empty()
                              ? make_polarized_county(PolarizedCountyParams{},
                                                      derive_stream(config.seed, hash_label("er-data")))
                              : load_election(config.er_data_path);
      ErNoiser noiser =
          config.er_noiser == "gaussian"
              ? ErNoiser::gaussian(config.er_sigma)
              : ErNoiser::toydown(BudgetAllocation::equal_split(config.er_epsilon, 2));
      PrecinctMode mode = config.er_mode == "all"        ? PrecinctMode::kAll
                          : config.er_mode == "weighted" ? PrecinctMode::kWeighted
                                                         : PrecinctMode::kFiltered;
      ErSummary summary =
          noisy_er_experiment(data, noiser, mode, config.replicates,
                              derive_stream(config.seed, hash_label("er")), config.er_min_votes,
                              /*keep_points=*/true);
      report.er_scatter = summary.points;
      summary.points.clear();
      report.er = std::move(summary);
    });
  }

  if (config.variance_curve) {
    with_stage("curve", [&] {
      std::vector<int> shape = config.branching;
      if (shape.empty() && lc.hier->is_homogeneous()) shape = lc.hier->branching();
      if (shape.size() != 2)
        throw ConfigError(
            "the variance curve sweeps depth-3 budgets; give a depth-3 homogeneous hierarchy");
      for (double e1 = config.curve_step; e1 < config.epsilon; e1 += config.curve_step)
        for (double e2 = config.curve_step; e1 + e2 < config.epsilon; e2 += config.curve_step) {
          double e3 = config.epsilon - e1 - e2;
          BudgetAllocation alloc({e1, e2, e3});
          report.curve.push_back({e1, e2, e3, block_variance_homogeneous(shape, alloc)});
        }
    });
  }
  return report;
}

void write_report(const RunReport& report, const std::string& dir) {
  std::filesystem::create_directories(dir);
  auto file = [&](const std::string& name) { return (std::filesystem::path(dir) / name).string(); };

  {
    auto out = open_out(file("report.txt"));
    const auto& c = report.config;
    out << "hierdp run report\n";
    out << "seed: " << c.seed << "\n";
    out << "replicates: " << c.replicates << "\n";
    out << "hierarchy: depth " << report.depth << ", " << report.nodes << " nodes, "
        << report.leaves << " leaves\n";
    out << "algorithm: " << c.algorithm << " (" << c.mode << ", "
        << (c.multi_attribute || c.algorithm == "minitopdown" ? "multi" : "single")
        << "-attribute)\n";
    out << "epsilon: " << fmt(c.epsilon) << " (split " << c.split << ")\n";
    out << "allocation:";
    for (int l = 0; l < report.allocation.depth(); ++l)
      out << ' ' << fmt(report.allocation.per_level[l]);
    out << "\n";
    out << "mean_l1: " << fmt(report.l1.mean()) << "\n";
    if (!report.districts.empty()) {
      out << "\ndistricts: method " << c.district_method << ", k " << c.k << ", count "
          << report.districts.size() << "\n";
      out << "index,frag,predicted_variance,empirical_variance,mean_error,mean_abs_error\n";
      for (size_t d = 0; d < report.districts.size(); ++d) {
        const auto& s = report.districts[d];
        out << d << ',' << fmt(s.frag) << ',' << fmt(s.predicted_variance) << ','
            << fmt(s.empirical_variance) << ',' << fmt(s.mean_error) << ','
            << fmt(s.mean_abs_error) << '\n';
      }
    }
    if (report.er) {
      const auto& er = *report.er;
      out << "\ner: noiser " << c.er_noiser << ", mode " << c.er_mode << "\n";
      out << "replicates_used: " << er.replicates.size() << "\n";
      out << "fit_failures: " << er.fit_failures << "\n";
      out << "support_group: mean " << fmt(er.mean_group) << " variance " << fmt(er.var_group)
          << " (1e-8 units: " << format_variance_1e8(er.var_group) << ")\n";
      out << "support_complement: mean " << fmt(er.mean_complement) << " variance "
          << fmt(er.var_complement) << " (1e-8 units: " << format_variance_1e8(er.var_complement)
          << ")\n";
    }
    out << "\nconfig:\n" << report.config.to_json() << "\n";
  }

  {
    auto out = open_out(file("district_errors.csv"));
    out << "replicate,district,error\n";
    for (Eigen::Index r = 0; r < report.errors.rows(); ++r)
      for (Eigen::Index d = 0; d < report.errors.cols(); ++d)
        out << r << ',' << d << ',' << fmt(report.errors(r, d)) << '\n';
  }
  {
    auto out = open_out(file("l1.csv"));
    out << "replicate,l1\n";
    for (Eigen::Index r = 0; r < report.l1.size(); ++r)
      out << r << ',' << fmt(report.l1[r]) << '\n';
  }
  if (report.er) {
    auto out = open_out(file("er_replicates.csv"));
    out << "replicate,support_group,support_complement,points,dropped\n";
    for (size_t r = 0; r < report.er->replicates.size(); ++r) {
      const auto& rep = report.er->replicates[r];
      out << r << ',' << fmt(rep.support_group) << ',' << fmt(rep.support_complement) << ','
          << rep.points << ',' << rep.dropped << '\n';
    }
  }
}

void emit_plotdata(const RunReport& report, const std::string& kind, const std::string& path) {
  if (kind == "error-hist") {
    if (report.errors.size() == 0)
      throw ConfigError("report holds no district errors to plot");
    auto out = open_out(path);
    out << "district,mean_abs_error\n";
    for (Eigen::Index d = 0; d < report.errors.cols(); ++d)
      out << d << ',' << fmt(report.errors.col(d).cwiseAbs().mean()) << '\n';
  } else if (kind == "er-scatter") {
    if (report.er_scatter.empty()) throw ConfigError("report holds no regression points to plot");
    auto out = open_out(path);
    out << "x,y,replicate\n";
    for (const auto& p : report.er_scatter)
      out << fmt(p[1]) << ',' << fmt(p[2]) << ',' << static_cast<long long>(p[0]) << '\n';
  } else if (kind == "variance-curve") {
    if (report.curve.empty()) throw ConfigError("report holds no variance curve to plot");
    auto out = open_out(path);
    out << "eps1,eps2,eps3,variance\n";
    for (const auto& row : report.curve)
      out << fmt(row[0]) << ',' << fmt(row[1]) << ',' << fmt(row[2]) << ',' << fmt(row[3])
          << '\n';
  } else {
    throw ConfigError("unknown plot kind '" + kind +
                      "' (expected error-hist, er-scatter, variance-curve)");
  }
}

}  // namespace hierdp
