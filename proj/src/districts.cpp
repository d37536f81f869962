#include "hierdp/districts.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace hierdp {

namespace {

int exact_sqrt(long long v) {
  long long r = std::llround(std::sqrt(static_cast<double>(v)));
  while (r * r > v) --r;
  while ((r + 1) * (r + 1) <= v) ++r;
  return r * r == v ? static_cast<int>(r) : -1;
}

}  // namespace

PlaneGrid PlaneGrid::build(const Hierarchy& hier) {
  if (!hier.is_homogeneous())
    throw InputError("grid embedding needs a homogeneous hierarchy");
  const auto& branching = hier.branching();
  std::vector<int> sub_side(branching.size());
  for (size_t l = 0; l < branching.size(); ++l) {
    int r = exact_sqrt(branching[l]);
    if (r < 0) throw InputError("grid embedding needs perfect-square branching factors");
    sub_side[l] = r;
  }

  PlaneGrid grid;
  grid.side = 1;
  for (int r : sub_side) grid.side *= r;
  int leaves = static_cast<int>(hier.leaves().size());
  grid.row_of.assign(leaves, 0);
  grid.col_of.assign(leaves, 0);
  grid.leaf_at.assign(static_cast<size_t>(grid.side) * grid.side, -1);

  // Leaf ids are dense from the first leaf onward; index within the leaf
  // level is id - first_leaf.
  NodeId first_leaf = hier.leaves().front();
  struct Frame {
    NodeId node;
    int row, col, side;
  };
  std::vector<Frame> stack{{hier.root(), 0, 0, grid.side}};
  while (!stack.empty()) {
    Frame f = stack.back();
    stack.pop_back();
    if (hier.is_leaf(f.node)) {
      int idx = f.node - first_leaf;
      grid.row_of[idx] = f.row;
      grid.col_of[idx] = f.col;
      grid.leaf_at[static_cast<size_t>(f.row) * grid.side + f.col] = f.node;
      continue;
    }
    int b = sub_side[hier.level(f.node) - 1];
    int child_side = f.side / b;
    const auto& ch = hier.children(f.node);
    for (size_t i = 0; i < ch.size(); ++i) {
      int rr = static_cast<int>(i) / b;
      int cc = static_cast<int>(i) % b;
      stack.push_back({ch[i], f.row + rr * child_side, f.col + cc * child_side, child_side});
    }
  }
  return grid;
}

District greedy(HierarchyPtr hier, int k, StreamRng& rng) {
  const Hierarchy& h = *hier;
  long long leaves = static_cast<long long>(h.leaves().size());
  if (k < 1) throw InputError("district count must be >= 1");
  if (k > leaves) throw InputError("district count exceeds leaf count");
  if (k == 1) return district_weights(std::move(hier), h.leaves());

  long long remaining = leaves / k;
  std::vector<NodeId> members;
  members.reserve(remaining);
  NodeId cur = h.root();
  while (remaining > 0) {
    const auto& ch = h.children(cur);
    int m = static_cast<int>(ch.size());
    std::vector<char> taken(m, 0);
    int start = static_cast<int>(rng.next_below(m));
    // One cyclic pass suffices: the budget only shrinks, so a unit that does
    // not fit now never will.
    for (int s = 0; s < m && remaining > 0; ++s) {
      int i = (start + s) % m;
      if (h.leaf_count(ch[i]) <= remaining) {
        taken[i] = 1;
        remaining -= h.leaf_count(ch[i]);
        auto sub = leaves_under(h, {ch[i]});
        members.insert(members.end(), sub.begin(), sub.end());
      }
    }
    if (remaining == 0) break;
    std::vector<int> open;
    for (int i = 0; i < m; ++i)
      if (!taken[i]) open.push_back(i);
    cur = ch[open[rng.next_below(open.size())]];
  }
  return district_weights(std::move(hier), std::move(members));
}

District square(HierarchyPtr hier, const PlaneGrid& grid, int k, StreamRng& rng) {
  const Hierarchy& h = *hier;
  long long leaves = static_cast<long long>(h.leaves().size());
  if (k < 1) throw InputError("district count must be >= 1");
  if (k > leaves || leaves % k != 0)
    throw InputError("district count must divide the leaf count");
  int side = exact_sqrt(leaves / k);
  if (side < 0) throw InputError("district size must be a perfect square");

  int span = grid.side - side + 1;
  int r0 = static_cast<int>(rng.next_below(span));
  int c0 = static_cast<int>(rng.next_below(span));
  std::vector<NodeId> members;
  members.reserve(static_cast<size_t>(side) * side);
  for (int r = r0; r < r0 + side; ++r)
    for (int c = c0; c < c0 + side; ++c)
      members.push_back(grid.leaf_at[static_cast<size_t>(r) * grid.side + c]);
  return district_weights(std::move(hier), std::move(members));
}

std::optional<std::vector<NodeId>> disconn(const std::vector<std::pair<NodeId, double>>& units,
                                           double target, double tolerance, StreamRng& rng) {
  if (units.empty()) throw InputError("disconn needs a unit pool");
  if (!(target > 0)) throw InputError("target population must be positive");
  if (tolerance < 0) throw InputError("tolerance must be non-negative");
  double lo = target * (1.0 - tolerance);
  double hi = target * (1.0 + tolerance);

  std::vector<size_t> order(units.size());
  std::iota(order.begin(), order.end(), 0u);
  for (size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.next_below(i)]);

  std::vector<NodeId> chosen;
  double sum = 0;
  for (size_t idx : order) {
    double pop = units[idx].second;
    if (pop < 0) throw InputError("unit populations must be non-negative");
    if (sum + pop > hi) continue;
    chosen.push_back(units[idx].first);
    sum += pop;
    if (sum >= lo) return chosen;
  }
  return std::nullopt;
}

Adjacency Adjacency::from_edges(int n, std::vector<std::pair<int, int>> edges) {
  if (n < 1) throw InputError("adjacency needs at least one unit");
  Adjacency g;
  g.n = n;
  for (auto& [a, b] : edges) {
    if (a < 0 || a >= n || b < 0 || b >= n) throw InputError("edge endpoint out of range");
    if (a == b) throw InputError("self-loops are not meaningful");
    if (a > b) std::swap(a, b);
  }
  std::sort(edges.begin(), edges.end());
  edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
  g.edges = std::move(edges);
  g.neighbors.resize(n);
  for (auto [a, b] : g.edges) {
    g.neighbors[a].push_back(b);
    g.neighbors[b].push_back(a);
  }
  return g;
}

Adjacency grid_adjacency(int rows, int cols) {
  if (rows < 1 || cols < 1) throw InputError("grid dimensions must be positive");
  std::vector<std::pair<int, int>> edges;
  auto id = [cols](int r, int c) { return r * cols + c; };
  for (int r = 0; r < rows; ++r)
    for (int c = 0; c < cols; ++c) {
      if (c + 1 < cols) edges.emplace_back(id(r, c), id(r, c + 1));
      if (r + 1 < rows) edges.emplace_back(id(r, c), id(r + 1, c));
    }
  return Adjacency::from_edges(rows * cols, std::move(edges));
}

Partition grid_stripes_partition(int rows, int cols, int k) {
  if (k < 1 || k > cols) throw InputError("stripe count must lie in [1, cols]");
  Partition p;
  p.k = k;
  p.assignment.resize(static_cast<size_t>(rows) * cols);
  for (int c = 0; c < cols; ++c) {
    int d = static_cast<int>((static_cast<long long>(c) * k) / cols);
    for (int r = 0; r < rows; ++r) p.assignment[static_cast<size_t>(r) * cols + c] = d;
  }
  return p;
}

namespace {

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  bool unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a == b) return false;
    parent[a] = b;
    return true;
  }
};

}  // namespace

bool recom_step(Partition& partition, const Adjacency& graph,
                const std::vector<double>& populations, double tolerance, StreamRng& rng,
                int tree_retries) {
  if (static_cast<int>(partition.assignment.size()) != graph.n ||
      static_cast<int>(populations.size()) != graph.n)
    throw InputError("partition, adjacency and populations must agree on the unit count");
  if (partition.k < 2) throw InputError("recombination needs at least two districts");
  if (tolerance < 0) throw InputError("tolerance must be non-negative");

  double total = std::accumulate(populations.begin(), populations.end(), 0.0);
  double ideal = total / partition.k;
  double lo = ideal * (1.0 - tolerance);
  double hi = ideal * (1.0 + tolerance);

  std::vector<std::pair<int, int>> pairs;
  for (auto [a, b] : graph.edges) {
    int da = partition.assignment[a];
    int db = partition.assignment[b];
    if (da != db) pairs.emplace_back(std::min(da, db), std::max(da, db));
  }
  std::sort(pairs.begin(), pairs.end());
  pairs.erase(std::unique(pairs.begin(), pairs.end()), pairs.end());
  if (pairs.empty()) throw InputError("no two districts are adjacent");
  auto [da, db] = pairs[rng.next_below(pairs.size())];

  std::vector<int> units;
  std::vector<int> local(graph.n, -1);
  for (int u = 0; u < graph.n; ++u)
    if (partition.assignment[u] == da || partition.assignment[u] == db) {
      local[u] = static_cast<int>(units.size());
      units.push_back(u);
    }
  int m = static_cast<int>(units.size());
  std::vector<std::pair<int, int>> merged_edges;
  for (auto [a, b] : graph.edges)
    if (local[a] >= 0 && local[b] >= 0) merged_edges.emplace_back(local[a], local[b]);

  for (int attempt = 0; attempt < tree_retries; ++attempt) {
    // Random spanning tree: uniform edge weights, then Kruskal.
    std::vector<std::pair<double, int>> keyed(merged_edges.size());
    for (size_t e = 0; e < merged_edges.size(); ++e)
      keyed[e] = {rng.next_unit(), static_cast<int>(e)};
    std::sort(keyed.begin(), keyed.end());

    UnionFind uf(m);
    std::vector<std::vector<int>> tree(m);
    std::vector<std::pair<int, int>> tree_edges;
    for (auto& [w, e] : keyed) {
      auto [a, b] = merged_edges[e];
      if (uf.unite(a, b)) {
        tree[a].push_back(b);
        tree[b].push_back(a);
        tree_edges.emplace_back(a, b);
        if (static_cast<int>(tree_edges.size()) == m - 1) break;
      }
    }
    if (static_cast<int>(tree_edges.size()) != m - 1)
      throw InputError("merged districts are not connected");

    // Root the tree and accumulate subtree populations in reverse DFS order.
    std::vector<int> order, parent(m, -1);
    order.reserve(m);
    order.push_back(0);
    for (size_t i = 0; i < order.size(); ++i)
      for (int nb : tree[order[i]])
        if (nb != parent[order[i]] && parent[nb] == -1 && nb != 0) {
          parent[nb] = order[i];
          order.push_back(nb);
        }
    std::vector<double> subtree(m);
    for (int i = m - 1; i >= 0; --i) {
      int v = order[i];
      subtree[v] += populations[units[v]];
      if (parent[v] >= 0) subtree[parent[v]] += subtree[v];
    }

    std::vector<int> cuts;
    for (int v = 1; v < m; ++v) {
      double inside = subtree[order[v]];
      double outside = subtree[order[0]] - inside;
      if (inside >= lo && inside <= hi && outside >= lo && outside <= hi)
        cuts.push_back(order[v]);
    }
    if (cuts.empty()) continue;

    int cut = cuts[rng.next_below(cuts.size())];
    // Units under the cut edge go to district da, the rest to db.
    std::vector<char> below(m, 0);
    below[cut] = 1;
    for (size_t i = 0; i < order.size(); ++i) {
      int v = order[i];
      if (v != cut && parent[v] >= 0 && below[parent[v]]) below[v] = 1;
    }
    for (int v = 0; v < m; ++v) partition.assignment[units[v]] = below[v] ? da : db;
    return true;
  }
  return false;
}

bool partition_valid(const Partition& partition, const Adjacency& graph,
                     const std::vector<double>& populations, double tolerance,
                     std::string* why) {
  auto fail = [&](const std::string& msg) {
    if (why) *why = msg;
    return false;
  };
  if (static_cast<int>(partition.assignment.size()) != graph.n ||
      static_cast<int>(populations.size()) != graph.n)
    return fail("unit count mismatch");
  double total = std::accumulate(populations.begin(), populations.end(), 0.0);
  double ideal = total / partition.k;

  std::vector<double> pop(partition.k, 0.0);
  std::vector<int> seed(partition.k, -1);
  for (int u = 0; u < graph.n; ++u) {
    int d = partition.assignment[u];
    if (d < 0 || d >= partition.k) return fail("unit " + std::to_string(u) + " is unassigned");
    pop[d] += populations[u];
    seed[d] = u;
  }
  for (int d = 0; d < partition.k; ++d) {
    if (seed[d] < 0) return fail("district " + std::to_string(d) + " is empty");
    if (std::abs(pop[d] - ideal) > tolerance * ideal + 1e-9)
      return fail("district " + std::to_string(d) + " is out of population tolerance");
  }
  // Flood fill each district from one seed; everything must be reached.
  std::vector<char> seen(graph.n, 0);
  for (int d = 0; d < partition.k; ++d) {
    std::vector<int> stack{seed[d]};
    seen[seed[d]] = 1;
    while (!stack.empty()) {
      int u = stack.back();
      stack.pop_back();
      for (int nb : graph.neighbors[u])
        if (!seen[nb] && partition.assignment[nb] == d) {
          seen[nb] = 1;
          stack.push_back(nb);
        }
    }
  }
  for (int u = 0; u < graph.n; ++u)
    if (!seen[u]) return fail("district " + std::to_string(partition.assignment[u]) +
                              " is disconnected at unit " + std::to_string(u));
  return true;
}

FragBounds frag_bounds(const std::vector<int>& branching, int k) {
  int d = static_cast<int>(branching.size()) + 1;
  if (d < 2) throw InputError("bounds need at least two levels");
  if (k < 2) throw InputError("bounds need at least two districts");
  long long prod = 1;
  int L = -1;
  for (int l = 1; l <= d - 1; ++l) {
    prod *= branching[l - 1];
    if (L < 0 && prod >= k) L = l;
  }
  if (L < 0) throw InputError("district count exceeds the unit count at every level");

  FragBounds bounds;
  double head = 0, tail = 0;
  for (int l = 1; l <= L; ++l) head += branching[l - 1];
  for (int l = L + 1; l <= d - 1; ++l) tail += branching[l - 1];
  bounds.greedy_upper =
      (static_cast<double>(k - 1) / (static_cast<double>(k) * k)) * head + 0.25 * tail;
  bounds.square_lower = (2.0 / 3.0) *
                        (std::sqrt(static_cast<double>(prod) / k) - 5.5) *
                        std::sqrt(static_cast<double>(branching[d - 2]));
  return bounds;
}

}  // namespace hierdp
