#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "hierdp/errors.hpp"

namespace hierdp {

using NodeId = int;

// Rooted tree of geographic units with uniform leaf depth.  Node ids are
// dense integers in breadth-first order (root = 0, level 1); sibling order is
// construction order and is part of the contract -- district generators and
// file round-trips rely on it.
class Hierarchy {
 public:
  // counts_per_level[l][i] = child count of the i-th node of level l+1 (BFS
  // order).  Every count must be >= 1 so leaves share one depth.  labels, if
  // given, names every node in id order; sibling labels must be distinct.
  static std::shared_ptr<const Hierarchy> from_level_child_counts(
      const std::vector<std::vector<int>>& counts_per_level,
      std::vector<std::string> labels = {});

  // Every node at level l has branching[l-1] children; depth = size + 1.
  static std::shared_ptr<const Hierarchy> homogeneous(const std::vector<int>& branching);

  int depth() const { return depth_; }
  int node_count() const { return static_cast<int>(parent_.size()); }
  NodeId root() const { return 0; }
  int level(NodeId h) const { return level_[check(h)]; }
  NodeId parent(NodeId h) const { return parent_[check(h)]; }
  const std::vector<NodeId>& children(NodeId h) const { return children_[check(h)]; }
  bool is_leaf(NodeId h) const { return children_[check(h)].empty(); }
  const std::vector<NodeId>& nodes_at_level(int level) const;
  const std::vector<NodeId>& leaves() const { return by_level_.back(); }
  // Number of leaves under h (1 for a leaf).
  int leaf_count(NodeId h) const { return leaf_count_[check(h)]; }
  bool is_homogeneous() const { return homogeneous_; }
  // Only meaningful when is_homogeneous().
  const std::vector<int>& branching() const;

  const std::string& label(NodeId h) const { return label_[check(h)]; }
  // Slash-joined labels from the root down to h.
  std::string path(NodeId h) const;

 private:
  Hierarchy() = default;
  NodeId check(NodeId h) const;

  int depth_ = 1;
  std::vector<int> level_;
  std::vector<NodeId> parent_;
  std::vector<std::vector<NodeId>> children_;
  std::vector<std::vector<NodeId>> by_level_;
  std::vector<int> leaf_count_;
  std::vector<std::string> label_;
  bool homogeneous_ = true;
  std::vector<int> branching_;
};

using HierarchyPtr = std::shared_ptr<const Hierarchy>;

// Ordered set of disjoint count categories (e.g. race/ethnicity buckets).
struct TypeSchema {
  std::vector<std::string> labels;

  explicit TypeSchema(std::vector<std::string> l);
  static TypeSchema single(std::string label = "total");
  // The seven mutually exclusive race/ethnicity categories.
  static TypeSchema census7();

  int size() const { return static_cast<int>(labels.size()); }
  int index_of(const std::string& label) const;  // -1 when absent
  bool operator==(const TypeSchema& o) const { return labels == o.labels; }
};

// Per-node, per-type real values attached to a hierarchy.  Entries start as
// NaN ("unset"); aggregate() fills internal nodes from leaves and marks the
// table consistent.
class CountTable {
 public:
  CountTable(HierarchyPtr hier, TypeSchema schema);
  static CountTable zeros(HierarchyPtr hier, TypeSchema schema);

  const Hierarchy& hierarchy() const { return *hier_; }
  const HierarchyPtr& hierarchy_ptr() const { return hier_; }
  const TypeSchema& schema() const { return schema_; }
  int type_count() const { return schema_.size(); }

  Eigen::MatrixXd& values() { return values_; }
  const Eigen::MatrixXd& values() const { return values_; }
  double operator()(NodeId h, int type) const { return values_(h, type); }
  double& at(NodeId h, int type) { return values_(h, type); }

  bool consistent() const { return consistent_; }
  void set_consistent(bool c) { consistent_ = c; }

  // Sum over leaves, all types.
  double total() const;
  // One-type sub-table keeping the original type label.
  CountTable type_column(int type) const;
  // Collapse all types into a single "total" column.
  CountTable totals() const;

 private:
  HierarchyPtr hier_;
  TypeSchema schema_;
  Eigen::MatrixXd values_;
  bool consistent_ = false;
};

// Sums leaf values up the tree.  Every leaf entry must be set (non-NaN);
// internal entries of the input are ignored.
CountTable aggregate(const CountTable& leaf_counts);

struct ConsistencyViolation {
  NodeId node;
  int type;
  double parent_value;
  double child_sum;
};

// Every internal node's value must equal its children's sum within
// |diff| <= tol * max(1, |parent|, |sum|).  Returns all violations.
std::vector<ConsistencyViolation> check_consistency(const CountTable& table, double tol);

// Hierarchy plus aggregated single-type table over the given leaf populations.
std::pair<HierarchyPtr, CountTable> build_homogeneous(const std::vector<int>& branching,
                                                      const std::vector<double>& leaf_populations);
std::pair<HierarchyPtr, CountTable> build_homogeneous(const std::vector<int>& branching,
                                                      double leaf_population);

// A district is a set of leaves; the weight of a node is the fraction of its
// subtree inside the district, computed bottom-up as the arithmetic mean of
// child weights (leaves score 0/1).
struct District {
  HierarchyPtr hier;
  std::vector<NodeId> leaves;  // sorted member leaf ids
  Eigen::VectorXd weights;     // one entry per node

  double root_weight() const { return weights[0]; }
  bool contains(NodeId leaf) const;
};

District district_weights(HierarchyPtr hier, std::vector<NodeId> member_leaves);

// All leaves under the given units (units may themselves be leaves).
std::vector<NodeId> leaves_under(const Hierarchy& hier, const std::vector<NodeId>& units);

}  // namespace hierdp
