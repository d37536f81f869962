#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <vector>

#include "doctest.h"
#include "hierdp/hierarchy.hpp"
#include "hierdp/rng.hpp"
#include "test_support.hpp"

using namespace hierdp;
using testsupport::bitwise_equal;

namespace {

// Three children under the root with 2, 4 and 2 leaves; the district holds
// one leaf of the first family, one of the second and both of the third.
District sample_district() {
  auto h = Hierarchy::from_level_child_counts({{3}, {2, 4, 2}});
  return district_weights(h, {4, 6, 10, 11});
}

}  // namespace

TEST_SUITE_BEGIN("hierarchy");

TEST_CASE("homogeneous construction is breadth-first") {
  auto h = Hierarchy::homogeneous({10, 10});
  CHECK(h->depth() == 3);
  CHECK(h->node_count() == 111);
  CHECK(h->root() == 0);
  CHECK(h->nodes_at_level(1).size() == 1);
  CHECK(h->nodes_at_level(2).size() == 10);
  CHECK(h->nodes_at_level(3).size() == 100);
  CHECK(h->leaves().size() == 100);
  CHECK(h->leaf_count(0) == 100);
  CHECK(h->leaf_count(1) == 10);
  CHECK(h->leaf_count(110) == 1);
  CHECK(h->is_homogeneous());
  CHECK(h->branching() == std::vector<int>{10, 10});
  CHECK(h->level(0) == 1);
  CHECK(h->level(10) == 2);
  CHECK(h->level(11) == 3);
  CHECK(h->parent(11) == 1);
  CHECK(h->parent(1) == 0);
  CHECK(h->children(1).front() == 11);
  CHECK(h->children(1).back() == 20);
  CHECK(h->is_leaf(11));
  CHECK_FALSE(h->is_leaf(1));
}

TEST_CASE("general construction tracks per-node child counts") {
  auto h = Hierarchy::from_level_child_counts({{3}, {2, 4, 2}});
  CHECK(h->depth() == 3);
  CHECK(h->node_count() == 12);
  CHECK(h->nodes_at_level(2) == std::vector<NodeId>{1, 2, 3});
  CHECK(h->children(1) == std::vector<NodeId>{4, 5});
  CHECK(h->children(2) == std::vector<NodeId>{6, 7, 8, 9});
  CHECK(h->children(3) == std::vector<NodeId>{10, 11});
  CHECK(h->leaf_count(2) == 4);
  CHECK_FALSE(h->is_homogeneous());
  CHECK_THROWS_AS(h->branching(), InputError);
}

TEST_CASE("construction rejects malformed shapes") {
  CHECK_THROWS_AS(Hierarchy::from_level_child_counts({{2}, {2}}), InputError);
  CHECK_THROWS_AS(Hierarchy::from_level_child_counts({{0}}), InputError);
  CHECK_THROWS_AS(Hierarchy::homogeneous({3, 0}), InputError);
  CHECK_THROWS_AS(
      Hierarchy::from_level_child_counts({{2}}, {"r", "a"}), InputError);
  CHECK_THROWS_AS(
      Hierarchy::from_level_child_counts({{2}}, {"r", "a", "a"}), InputError);
}

TEST_CASE("labels and paths") {
  auto plain = Hierarchy::homogeneous({2, 2});
  CHECK(plain->label(0) == "root");
  CHECK(plain->path(0) == "root");
  CHECK(plain->path(3) == "root/0/0");
  CHECK(plain->path(6) == "root/1/1");

  auto named = Hierarchy::from_level_child_counts({{2}}, {"us", "tx", "ok"});
  CHECK(named->path(1) == "us/tx");
  CHECK(named->path(2) == "us/ok");
}

TEST_CASE("type schema") {
  CHECK(TypeSchema::single().labels == std::vector<std::string>{"total"});
  TypeSchema census = TypeSchema::census7();
  CHECK(census.size() == 7);
  CHECK(census.index_of("black") == 2);
  CHECK(census.index_of("martian") == -1);
  CHECK_THROWS_AS(TypeSchema({}), InputError);
  CHECK_THROWS_AS(TypeSchema({"a", "a"}), InputError);
  CHECK_THROWS_AS(TypeSchema({""}), InputError);
}

TEST_CASE("aggregate sums leaves up the tree") {
  auto h = Hierarchy::from_level_child_counts({{3}, {2, 4, 2}});
  CountTable leaves(h, TypeSchema::single());
  for (NodeId leaf : h->leaves()) leaves.at(leaf, 0) = 0.0;
  for (NodeId leaf : {4, 6, 10, 11}) leaves.at(leaf, 0) = 1.0;

  CountTable table = aggregate(leaves);
  CHECK(table.consistent());
  CHECK(table(0, 0) == 4.0);
  CHECK(table(1, 0) == 1.0);
  CHECK(table(2, 0) == 1.0);
  CHECK(table(3, 0) == 2.0);
  CHECK(table.total() == 4.0);

  SUBCASE("types aggregate independently") {
    CountTable two(h, TypeSchema({"a", "b"}));
    StreamRng rng(7);
    for (NodeId leaf : h->leaves()) {
      two.at(leaf, 0) = static_cast<double>(rng.next_below(5));
      two.at(leaf, 1) = static_cast<double>(rng.next_below(5));
    }
    CountTable agg = aggregate(two);
    double a = 0, b = 0;
    for (NodeId leaf : h->leaves()) {
      a += two(leaf, 0);
      b += two(leaf, 1);
    }
    CHECK(agg(0, 0) == a);
    CHECK(agg(0, 1) == b);
  }

  SUBCASE("missing leaf is rejected with its path") {
    CountTable partial(h, TypeSchema::single());
    partial.at(4, 0) = 1.0;
    CHECK_THROWS_WITH_AS(aggregate(partial),
                         doctest::Contains("root/0/1"), InputError);
  }
}

TEST_CASE("consistency checking") {
  auto [h, table] = build_homogeneous({3, 3}, 2.0);
  CHECK(check_consistency(table, 0.0).empty());

  SUBCASE("a perturbed internal node breaks its own family and its parent's") {
    CountTable bad = table;
    bad.at(2, 0) += 1.0;
    auto violations = check_consistency(bad, 1e-9);
    REQUIRE(violations.size() == 2);
    CHECK(violations[0].node == 0);
    CHECK(violations[0].parent_value == 18.0);
    CHECK(violations[0].child_sum == 19.0);
    CHECK(violations[1].node == 2);
    CHECK(violations[1].type == 0);
    CHECK(violations[1].parent_value == 7.0);
    CHECK(violations[1].child_sum == 6.0);
  }

  SUBCASE("tolerance scales with magnitude") {
    CountTable off = table;
    off.at(1, 0) += 1e-7;
    CHECK(check_consistency(off, 1e-6).empty());
    CHECK(check_consistency(off, 1e-9).size() == 2);
  }

  CHECK_THROWS_AS(check_consistency(table, -1.0), InputError);
}

TEST_CASE("count table slices") {
  auto h = Hierarchy::homogeneous({2, 2});
  CountTable leaves(h, TypeSchema({"a", "b"}));
  for (NodeId leaf : h->leaves()) {
    leaves.at(leaf, 0) = 1.0;
    leaves.at(leaf, 1) = 2.0;
  }
  CountTable table = aggregate(leaves);

  CountTable col = table.type_column(1);
  CHECK(col.schema().labels == std::vector<std::string>{"b"});
  CHECK(col(0, 0) == 8.0);
  CHECK(col.consistent());
  CHECK_THROWS_AS(table.type_column(2), InputError);

  CountTable tot = table.totals();
  CHECK(tot.schema().labels == std::vector<std::string>{"total"});
  CHECK(tot(0, 0) == 12.0);
  CHECK(tot(3, 0) == 3.0);

  CountTable zero = CountTable::zeros(h, TypeSchema::single());
  CHECK(zero.consistent());
  CHECK(zero.total() == 0.0);
}

TEST_CASE("build_homogeneous") {
  auto [h, table] = build_homogeneous({10, 10}, 1.0);
  CHECK(table(0, 0) == 100.0);
  CHECK(table(1, 0) == 10.0);
  CHECK(table.total() == 100.0);

  auto [h2, varied] = build_homogeneous({2}, std::vector<double>{3.0, 5.0});
  CHECK(varied(0, 0) == 8.0);
  CHECK_THROWS_AS(build_homogeneous({2}, std::vector<double>{1.0}), InputError);
  CHECK_THROWS_AS(build_homogeneous({2}, std::vector<double>{-1.0, 1.0}), InputError);
}

TEST_CASE("district weights are bottom-up child means") {
  District d = sample_district();
  CHECK(d.leaves == std::vector<NodeId>{4, 6, 10, 11});
  CHECK(d.weights[4] == 1.0);
  CHECK(d.weights[5] == 0.0);
  CHECK(d.weights[1] == 0.5);
  CHECK(d.weights[2] == 0.25);
  CHECK(d.weights[3] == 1.0);
  CHECK(d.root_weight() == doctest::Approx(7.0 / 12.0).epsilon(1e-15));
  CHECK(d.contains(4));
  CHECK_FALSE(d.contains(5));

  SUBCASE("duplicates collapse and order does not matter") {
    District same = district_weights(d.hier, {11, 10, 6, 4, 4});
    CHECK(same.leaves == d.leaves);
    CHECK(bitwise_equal(same.weights, d.weights));
  }

  SUBCASE("internal ids are rejected") {
    CHECK_THROWS_AS(district_weights(d.hier, {1}), InputError);
    CHECK_THROWS_AS(district_weights(d.hier, {99}), InputError);
  }

  SUBCASE("empty and full districts") {
    District none = district_weights(d.hier, {});
    CHECK(none.weights.maxCoeff() == 0.0);
    District all = district_weights(d.hier, d.hier->leaves());
    CHECK(all.weights.minCoeff() == 1.0);
  }
}

TEST_CASE("homogeneous root weight equals the member fraction") {
  auto h = Hierarchy::homogeneous({4, 5});
  StreamRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    std::vector<NodeId> members;
    for (NodeId leaf : h->leaves())
      if (rng.next_unit() < 0.5) members.push_back(leaf);
    District d = district_weights(h, members);
    CHECK(d.root_weight() ==
          doctest::Approx(static_cast<double>(members.size()) / 20.0).epsilon(1e-12));
  }
}

TEST_CASE("adding a leaf never lowers a weight") {
  auto h = Hierarchy::homogeneous({3, 4});
  StreamRng rng(5);
  std::vector<NodeId> members;
  for (NodeId leaf : h->leaves())
    if (rng.next_unit() < 0.4) members.push_back(leaf);
  District before = district_weights(h, members);

  NodeId extra = -1;
  for (NodeId leaf : h->leaves())
    if (!before.contains(leaf)) {
      extra = leaf;
      break;
    }
  REQUIRE(extra >= 0);
  members.push_back(extra);
  District after = district_weights(h, members);
  CHECK(((after.weights - before.weights).array() >= 0).all());
}

TEST_CASE("leaves_under expands units") {
  auto h = Hierarchy::from_level_child_counts({{3}, {2, 4, 2}});
  CHECK(leaves_under(*h, {1}) == std::vector<NodeId>{4, 5});
  CHECK(leaves_under(*h, {10}) == std::vector<NodeId>{10});
  CHECK(leaves_under(*h, {0}).size() == 8);
  CHECK_THROWS_AS(leaves_under(*h, {42}), InputError);
}

TEST_CASE("node id bounds are enforced") {
  auto h = Hierarchy::homogeneous({2});
  CHECK_THROWS_AS(h->level(-1), InputError);
  CHECK_THROWS_AS(h->parent(3), InputError);
  CHECK_THROWS_AS(h->nodes_at_level(0), InputError);
  CHECK_THROWS_AS(h->nodes_at_level(3), InputError);
}
