#pragma once

#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "hierdp/hierarchy.hpp"
#include "hierdp/rng.hpp"

namespace hierdp {

// Square-grid embedding of the leaves of a homogeneous hierarchy whose
// branching factors are all perfect squares: each node owns an axis-aligned
// square of cells, children tiling their parent in row-major child order.
struct PlaneGrid {
  int side = 0;                 // the full grid is side x side
  std::vector<int> row_of;      // per leaf id (hierarchy leaf order)
  std::vector<int> col_of;
  std::vector<NodeId> leaf_at;  // row * side + col -> leaf id

  static PlaneGrid build(const Hierarchy& hier);
};

// Tree-respecting district of |leaves|/k leaves: fills with whole subtrees
// first and descends into at most one partial unit per level.  Ties among
// eligible units break by hierarchy child order from a random start.
District greedy(HierarchyPtr hier, int k, StreamRng& rng);

// Uniformly placed square district of |leaves|/k cells (the quotient must be
// a perfect square).
District square(HierarchyPtr hier, const PlaneGrid& grid, int k, StreamRng& rng);

// Accumulates whole units in random order, skipping any that would overshoot
// target * (1 + tolerance), until the running total reaches
// target * (1 - tolerance).  Returns the chosen unit ids, or nullopt when the
// pool is exhausted first (caller retries with a fresh seed).
std::optional<std::vector<NodeId>> disconn(const std::vector<std::pair<NodeId, double>>& units,
                                           double target, double tolerance, StreamRng& rng);

// Undirected unit adjacency.
struct Adjacency {
  int n = 0;
  std::vector<std::pair<int, int>> edges;
  std::vector<std::vector<int>> neighbors;

  static Adjacency from_edges(int n, std::vector<std::pair<int, int>> edges);
};

Adjacency grid_adjacency(int rows, int cols);

// Assignment of every unit to one of k districts.
struct Partition {
  int k = 0;
  std::vector<int> assignment;
};

// k contiguous column bands of an rows x cols grid, balanced in cell count.
Partition grid_stripes_partition(int rows, int cols, int k);

// One recombination move: pick an adjacent district pair, merge them, draw a
// random spanning tree (uniform edge weights + minimum spanning tree), and
// split at an edge whose two sides both land within population tolerance of
// the ideal district size.  Up to tree_retries trees are drawn; if none has a
// balanced cut the partition is left unchanged and false is returned.
bool recom_step(Partition& partition, const Adjacency& graph,
                const std::vector<double>& populations, double tolerance, StreamRng& rng,
                int tree_retries = 100);

// Districts must cover every unit, be connected, and sit within population
// tolerance of the ideal size.  On failure, fills `why` when given.
bool partition_valid(const Partition& partition, const Adjacency& graph,
                     const std::vector<double>& populations, double tolerance,
                     std::string* why = nullptr);

struct FragBounds {
  double greedy_upper = 0;
  double square_lower = 0;
};

// Closed-form fragmentation bounds for k equal districts of a homogeneous
// hierarchy: an upper bound met by the tree-respecting generator and a lower
// bound for any square district on the grid embedding.
FragBounds frag_bounds(const std::vector<int>& branching, int k);

}  // namespace hierdp
