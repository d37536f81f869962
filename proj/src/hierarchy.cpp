#include "hierdp/hierarchy.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <unordered_set>

namespace hierdp {

NodeId Hierarchy::check(NodeId h) const {
  if (h < 0 || h >= node_count()) throw InputError("node id out of range");
  return h;
}

const std::vector<NodeId>& Hierarchy::nodes_at_level(int level) const {
  if (level < 1 || level > depth_) throw InputError("level out of range");
  return by_level_[level - 1];
}

const std::vector<int>& Hierarchy::branching() const {
  if (!homogeneous_) throw InputError("hierarchy is not homogeneous");
  return branching_;
}

std::string Hierarchy::path(NodeId h) const {
  check(h);
  std::vector<NodeId> chain;
  for (NodeId cur = h; cur >= 0; cur = parent_[cur]) chain.push_back(cur);
  std::string out;
  for (auto it = chain.rbegin(); it != chain.rend(); ++it) {
    if (!out.empty()) out += '/';
    out += label_[*it];
  }
  return out;
}

std::shared_ptr<const Hierarchy> Hierarchy::from_level_child_counts(
    const std::vector<std::vector<int>>& counts_per_level, std::vector<std::string> labels) {
  auto h = std::shared_ptr<Hierarchy>(new Hierarchy);
  h->depth_ = static_cast<int>(counts_per_level.size()) + 1;

  // Node ids are assigned level by level, which is exactly BFS order.
  std::vector<int> level_sizes(h->depth_);
  level_sizes[0] = 1;
  for (int l = 0; l + 1 < h->depth_; ++l) {
    const auto& counts = counts_per_level[l];
    if (static_cast<int>(counts.size()) != level_sizes[l])
      throw InputError("child counts for level " + std::to_string(l + 1) +
                       " must cover every node at that level");
    long long next = 0;
    for (int c : counts) {
      if (c < 1) throw InputError("every internal node needs at least one child");
      next += c;
    }
    level_sizes[l + 1] = static_cast<int>(next);
  }

  int n = std::accumulate(level_sizes.begin(), level_sizes.end(), 0);
  h->level_.resize(n);
  h->parent_.assign(n, -1);
  h->children_.resize(n);
  h->by_level_.resize(h->depth_);
  h->leaf_count_.assign(n, 0);

  NodeId next_id = 1;
  h->level_[0] = 1;
  h->by_level_[0] = {0};
  for (int l = 0; l + 1 < h->depth_; ++l) {
    const auto& counts = counts_per_level[l];
    auto& frontier = h->by_level_[l];
    auto& below = h->by_level_[l + 1];
    below.reserve(level_sizes[l + 1]);
    for (size_t i = 0; i < frontier.size(); ++i) {
      NodeId p = frontier[i];
      h->children_[p].reserve(counts[i]);
      for (int c = 0; c < counts[i]; ++c) {
        NodeId id = next_id++;
        h->parent_[id] = p;
        h->level_[id] = l + 2;
        h->children_[p].push_back(id);
        below.push_back(id);
      }
    }
  }

  for (NodeId id = n - 1; id >= 0; --id)
    h->leaf_count_[id] = h->children_[id].empty()
                             ? 1
                             : std::accumulate(h->children_[id].begin(), h->children_[id].end(), 0,
                                               [&](int a, NodeId c) { return a + h->leaf_count_[c]; });

  h->homogeneous_ = true;
  h->branching_.clear();
  for (int l = 0; l + 1 < h->depth_; ++l) {
    const auto& counts = counts_per_level[l];
    if (std::adjacent_find(counts.begin(), counts.end(), std::not_equal_to<>()) != counts.end()) {
      h->homogeneous_ = false;
      break;
    }
    h->branching_.push_back(counts[0]);
  }
  if (!h->homogeneous_) h->branching_.clear();

  if (labels.empty()) {
    h->label_.resize(n);
    h->label_[0] = "root";
    for (NodeId id = 0; id < n; ++id)
      for (size_t c = 0; c < h->children_[id].size(); ++c)
        h->label_[h->children_[id][c]] = std::to_string(c);
  } else {
    if (static_cast<int>(labels.size()) != n)
      throw InputError("label list must cover every node");
    h->label_ = std::move(labels);
    for (NodeId id = 0; id < n; ++id) {
      std::unordered_set<std::string> seen;
      for (NodeId c : h->children_[id])
        if (!seen.insert(h->label_[c]).second)
          throw InputError("sibling labels must be distinct under '" + h->label_[id] + "'");
    }
  }
  return h;
}

std::shared_ptr<const Hierarchy> Hierarchy::homogeneous(const std::vector<int>& branching) {
  std::vector<std::vector<int>> counts(branching.size());
  int width = 1;
  for (size_t l = 0; l < branching.size(); ++l) {
    if (branching[l] < 1) throw InputError("branching factors must be >= 1");
    counts[l].assign(width, branching[l]);
    width *= branching[l];
  }
  return from_level_child_counts(counts);
}

TypeSchema::TypeSchema(std::vector<std::string> l) : labels(std::move(l)) {
  if (labels.empty()) throw InputError("type schema needs at least one category");
  std::unordered_set<std::string> seen;
  for (const auto& s : labels)
    if (s.empty() || !seen.insert(s).second)
      throw InputError("type labels must be non-empty and distinct");
}

TypeSchema TypeSchema::single(std::string label) { return TypeSchema({std::move(label)}); }

TypeSchema TypeSchema::census7() {
  return TypeSchema({"hispanic", "white", "black", "amin", "asian", "nhpi", "other"});
}

int TypeSchema::index_of(const std::string& label) const {
  for (int i = 0; i < size(); ++i)
    if (labels[i] == label) return i;
  return -1;
}

CountTable::CountTable(HierarchyPtr hier, TypeSchema schema)
    : hier_(std::move(hier)), schema_(std::move(schema)) {
  if (!hier_) throw InputError("count table needs a hierarchy");
  values_.setConstant(hier_->node_count(), schema_.size(),
                      std::numeric_limits<double>::quiet_NaN());
}

CountTable CountTable::zeros(HierarchyPtr hier, TypeSchema schema) {
  CountTable t(std::move(hier), std::move(schema));
  t.values_.setZero();
  t.consistent_ = true;
  return t;
}

double CountTable::total() const {
  double s = 0;
  for (NodeId leaf : hier_->leaves()) s += values_.row(leaf).sum();
  return s;
}

CountTable CountTable::type_column(int type) const {
  if (type < 0 || type >= type_count()) throw InputError("type index out of range");
  CountTable t(hier_, TypeSchema::single(schema_.labels[type]));
  t.values_ = values_.col(type);
  t.consistent_ = consistent_;
  return t;
}

CountTable CountTable::totals() const {
  CountTable t(hier_, TypeSchema::single());
  t.values_ = values_.rowwise().sum();
  t.consistent_ = consistent_;
  return t;
}

CountTable aggregate(const CountTable& leaf_counts) {
  const Hierarchy& h = leaf_counts.hierarchy();
  CountTable out(leaf_counts.hierarchy_ptr(), leaf_counts.schema());
  for (NodeId leaf : h.leaves()) {
    if (leaf_counts.values().row(leaf).hasNaN())
      throw InputError("missing leaf value at '" + h.path(leaf) + "'");
    out.values().row(leaf) = leaf_counts.values().row(leaf);
  }
  // Ids are BFS-ordered, so a reverse scan sees children before parents.
  for (NodeId id = h.node_count() - 1; id >= 0; --id) {
    if (h.is_leaf(id)) continue;
    out.values().row(id).setZero();
    for (NodeId c : h.children(id)) out.values().row(id) += out.values().row(c);
  }
  out.set_consistent(true);
  return out;
}

std::vector<ConsistencyViolation> check_consistency(const CountTable& table, double tol) {
  if (tol < 0) throw InputError("tolerance must be non-negative");
  const Hierarchy& h = table.hierarchy();
  std::vector<ConsistencyViolation> out;
  for (NodeId id = 0; id < h.node_count(); ++id) {
    if (h.is_leaf(id)) continue;
    for (int t = 0; t < table.type_count(); ++t) {
      double sum = 0;
      for (NodeId c : h.children(id)) sum += table(c, t);
      double v = table(id, t);
      double bound = tol * std::max({1.0, std::abs(v), std::abs(sum)});
      if (!(std::abs(v - sum) <= bound)) out.push_back({id, t, v, sum});
    }
  }
  return out;
}

std::pair<HierarchyPtr, CountTable> build_homogeneous(const std::vector<int>& branching,
                                                      const std::vector<double>& leaf_populations) {
  auto h = Hierarchy::homogeneous(branching);
  if (static_cast<int>(leaf_populations.size()) != static_cast<int>(h->leaves().size()))
    throw InputError("leaf population list does not match leaf count");
  CountTable leaves(h, TypeSchema::single());
  const auto& ids = h->leaves();
  for (size_t i = 0; i < ids.size(); ++i) {
    if (leaf_populations[i] < 0) throw InputError("leaf populations must be non-negative");
    leaves.at(ids[i], 0) = leaf_populations[i];
  }
  return {h, aggregate(leaves)};
}

std::pair<HierarchyPtr, CountTable> build_homogeneous(const std::vector<int>& branching,
                                                      double leaf_population) {
  auto h = Hierarchy::homogeneous(branching);
  return {h, build_homogeneous(branching,
                               std::vector<double>(h->leaves().size(), leaf_population))
                 .second};
}

bool District::contains(NodeId leaf) const {
  return std::binary_search(leaves.begin(), leaves.end(), leaf);
}

District district_weights(HierarchyPtr hier, std::vector<NodeId> member_leaves) {
  if (!hier) throw InputError("district needs a hierarchy");
  const Hierarchy& h = *hier;
  std::sort(member_leaves.begin(), member_leaves.end());
  member_leaves.erase(std::unique(member_leaves.begin(), member_leaves.end()),
                      member_leaves.end());
  for (NodeId id : member_leaves)
    if (id < 0 || id >= h.node_count() || !h.is_leaf(id))
      throw InputError("district members must be leaves");

  District d;
  d.hier = std::move(hier);
  d.weights.setZero(h.node_count());
  for (NodeId id : member_leaves) d.weights[id] = 1.0;
  for (NodeId id = h.node_count() - 1; id >= 0; --id) {
    const auto& ch = h.children(id);
    if (ch.empty()) continue;
    double s = 0;
    for (NodeId c : ch) s += d.weights[c];
    d.weights[id] = s / static_cast<double>(ch.size());
  }
  d.leaves = std::move(member_leaves);
  return d;
}

std::vector<NodeId> leaves_under(const Hierarchy& hier, const std::vector<NodeId>& units) {
  std::vector<NodeId> out;
  std::vector<NodeId> stack;
  for (NodeId u : units) {
    if (u < 0 || u >= hier.node_count()) throw InputError("unit id out of range");
    stack.push_back(u);
    while (!stack.empty()) {
      NodeId cur = stack.back();
      stack.pop_back();
      if (hier.is_leaf(cur)) {
        out.push_back(cur);
      } else {
        const auto& ch = hier.children(cur);
        stack.insert(stack.end(), ch.rbegin(), ch.rend());
      }
    }
  }
  return out;
}

}  // namespace hierdp
