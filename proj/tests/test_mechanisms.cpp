#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <cstdint>
#include <vector>

#include "doctest.h"
#include "hierdp/mechanisms.hpp"
#include "test_support.hpp"

using namespace hierdp;
using testsupport::bitwise_equal;
using testsupport::moments;

TEST_SUITE_BEGIN("mechanisms");

TEST_CASE("budget allocation invariants") {
  BudgetAllocation alloc{0.5, 0.3, 0.2};
  CHECK(alloc.depth() == 3);
  CHECK(alloc.total() == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(alloc.level(1) == 0.5);
  CHECK(alloc.level(3) == 0.2);
  CHECK_THROWS_AS(alloc.level(0), InputError);
  CHECK_THROWS_AS(alloc.level(4), InputError);
  CHECK_NOTHROW(alloc.require_positive());

  BudgetAllocation equal = BudgetAllocation::equal_split(1.0, 4);
  CHECK(equal.per_level.size() == 4);
  CHECK(equal.level(2) == 0.25);

  BudgetAllocation boundary{0.0, 1.0};
  CHECK_THROWS_AS(boundary.require_positive(), InputError);

  CHECK_THROWS_AS(BudgetAllocation({-0.1, 0.5}), InputError);
  CHECK_THROWS_AS(BudgetAllocation({0.0, 0.0}), InputError);
  CHECK_THROWS_AS(BudgetAllocation(Eigen::VectorXd()), InputError);
  CHECK_THROWS_AS(BudgetAllocation::equal_split(0.0, 3), InputError);
  CHECK_THROWS_AS(BudgetAllocation::equal_split(1.0, 0), InputError);
}

TEST_CASE("noise variance constant") {
  CHECK(kSensitivity == 2.0);
  CHECK(noise_variance(1.0) == 8.0);
  CHECK(noise_variance(0.2) == doctest::Approx(200.0).epsilon(1e-12));
}

TEST_CASE("stream derivation is order-sensitive and stable") {
  CHECK(derive_stream(1, 2, 3) != derive_stream(1, 3, 2));
  CHECK(derive_stream(1, 2, 3) != derive_stream(2, 2, 3));
  CHECK(derive_stream(1, 2, 3) == derive_stream(1, 2, 3));
  CHECK(hash_label("detailed") != hash_label("total"));
  CHECK(replicate_seed(9, 0) != replicate_seed(9, 1));
  CHECK(replicate_seed(9, 0) != replicate_seed(10, 0));
}

TEST_CASE("laplace sampler") {
  CHECK(laplace_icdf(2.0, 0.5) == 0.0);
  CHECK(laplace_icdf(2.0, 0.75) == doctest::Approx(2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK(laplace_icdf(2.0, 0.25) == doctest::Approx(-2.0 * std::log(2.0)).epsilon(1e-12));
  CHECK_THROWS_AS(laplace_icdf(0.0, 0.5), InputError);
  CHECK_THROWS_AS(laplace_icdf(-1.0, 0.5), InputError);

  StreamRng rng(404);
  std::vector<double> draws(1000000);
  for (double& d : draws) d = sample_laplace(2.0, rng);
  auto m = moments(draws);
  CHECK(std::abs(m.mean) < 3.0 * std::sqrt(8.0 / 1e6));
  CHECK(m.var == doctest::Approx(8.0).epsilon(0.02));
}

TEST_CASE("two-sided geometric sampler") {
  StreamRng rng(2024);
  CHECK_THROWS_AS(sample_one_sided_geometric(0.0, rng), InputError);
  CHECK_THROWS_AS(sample_one_sided_geometric(1.0, rng), InputError);

  const double beta = 0.5;
  int zeros = 0;
  const int n = 1000000;
  std::vector<double> draws(n);
  for (int i = 0; i < n; ++i) {
    long long v = sample_two_sided_geometric(beta, rng);
    draws[i] = static_cast<double>(v);
    if (v == 0) ++zeros;
  }
  auto m = moments(draws);
  CHECK(m.var == doctest::Approx(2.0 * beta / ((1 - beta) * (1 - beta))).epsilon(0.02));
  CHECK(std::abs(m.mean) < 3.0 * std::sqrt(m.var / n));
  // P[0] = (1 - beta) / (1 + beta).
  CHECK(static_cast<double>(zeros) / n == doctest::Approx(1.0 / 3.0).epsilon(0.01));
}

TEST_CASE("gaussian sampler") {
  StreamRng rng(31);
  std::vector<double> draws(400000);
  for (double& d : draws) d = sample_gaussian(1.5, rng);
  auto m = moments(draws);
  CHECK(m.var == doctest::Approx(2.25).epsilon(0.02));
  CHECK(std::abs(m.mean) < 3.0 * std::sqrt(2.25 / 400000.0));
  CHECK(sample_gaussian(0.0, rng) == 0.0);
  CHECK_THROWS_AS(sample_gaussian(-1.0, rng), InputError);
}

TEST_CASE("distinct streams are uncorrelated") {
  StreamRng a(derive_stream(77, 0, hash_label("total")));
  StreamRng b(derive_stream(77, 1, hash_label("total")));
  const int n = 100000;
  double sa = 0, sb = 0, sab = 0, saa = 0, sbb = 0;
  for (int i = 0; i < n; ++i) {
    double x = sample_laplace(1.0, a);
    double y = sample_laplace(1.0, b);
    sa += x;
    sb += y;
    sab += x * y;
    saa += x * x;
    sbb += y * y;
  }
  double cov = sab / n - (sa / n) * (sb / n);
  double r = cov / std::sqrt((saa / n - (sa / n) * (sa / n)) * (sbb / n - (sb / n) * (sb / n)));
  CHECK(std::abs(r) < 0.01);
}

TEST_CASE("workload construction and validation") {
  TypeSchema census = TypeSchema::census7();
  Workload detailed = Workload::detailed(census);
  CHECK(detailed.histograms.size() == 1);
  CHECK(detailed.histograms[0].bins.size() == 7);
  CHECK(detailed.shares == std::vector<double>{1.0});
  CHECK_NOTHROW(detailed.validate(7));

  Workload both = Workload::detailed_plus_total(census, 0.1);
  CHECK(both.histograms.size() == 2);
  CHECK(both.histograms[1].bins.size() == 1);
  CHECK(both.histograms[1].bins[0].size() == 7);
  CHECK(both.shares[0] == 0.1);
  CHECK(both.shares[1] == 0.9);
  CHECK_NOTHROW(both.validate(7));
  CHECK_THROWS_AS(Workload::detailed_plus_total(census, 0.0), InputError);
  CHECK_THROWS_AS(Workload::detailed_plus_total(census, 1.0), InputError);

  SUBCASE("shares must sum to one") {
    Workload bad = detailed;
    bad.shares = {0.9};
    CHECK_THROWS_AS(bad.validate(7), InputError);
  }
  SUBCASE("bins must partition the types") {
    Workload bad = detailed;
    bad.histograms[0].bins[1] = {0};
    CHECK_THROWS_AS(bad.validate(7), InputError);
  }
  SUBCASE("bins must cover the types") {
    Workload bad = detailed;
    bad.histograms[0].bins.pop_back();
    CHECK_THROWS_AS(bad.validate(7), InputError);
  }
  SUBCASE("empty workload is rejected") {
    Workload bad;
    CHECK_THROWS_AS(bad.validate(1), InputError);
  }
}

TEST_CASE("geometric beta") {
  CHECK(geometric_beta(1.0, 1.0) == doctest::Approx(std::exp(-0.5)).epsilon(1e-12));
  CHECK(geometric_beta(0.1, 0.6) == doctest::Approx(std::exp(-0.05 * 0.6)).epsilon(1e-12));
  CHECK_THROWS_AS(geometric_beta(0.0, 1.0), InputError);
  CHECK_THROWS_AS(geometric_beta(0.5, 0.0), InputError);
}

TEST_CASE("toydown noising") {
  auto [h, table] = build_homogeneous({3, 3}, 4.0);

  SUBCASE("vanishing noise at huge budgets") {
    auto run = toydown_noise(table, {1e9, 1e9, 1e9}, false, 1);
    CHECK((run.noisy.values() - table.values()).cwiseAbs().maxCoeff() < 1e-6);
    CHECK_FALSE(run.noisy.consistent());
  }

  SUBCASE("same seed gives identical ledgers and values") {
    auto a = toydown_noise(table, BudgetAllocation::equal_split(1.0, 3), false, 99);
    auto b = toydown_noise(table, BudgetAllocation::equal_split(1.0, 3), false, 99);
    CHECK(bitwise_equal(a.ledger.draws, b.ledger.draws));
    CHECK(bitwise_equal(a.noisy.values(), b.noisy.values()));
    auto c = toydown_noise(table, BudgetAllocation::equal_split(1.0, 3), false, 100);
    CHECK_FALSE(bitwise_equal(a.ledger.draws, c.ledger.draws));
  }

  SUBCASE("noisy value is truth plus the recorded draw") {
    auto run = toydown_noise(table, {0.4, 0.3, 0.3}, false, 7);
    for (NodeId id = 0; id < h->node_count(); ++id)
      CHECK(run.noisy(id, 0) == table(id, 0) + run.ledger.draws(id, 0));
  }

  SUBCASE("budget bookkeeping matches the allocation") {
    BudgetAllocation alloc{0.4, 0.3, 0.3};
    auto run = toydown_noise(table, alloc, false, 7);
    CHECK(bitwise_equal(run.ledger.budget_per_level, alloc.per_level));
  }

  SUBCASE("single-attribute mode noises totals") {
    CountTable leaves(h, TypeSchema({"a", "b"}));
    for (NodeId leaf : h->leaves()) {
      leaves.at(leaf, 0) = 1.0;
      leaves.at(leaf, 1) = 2.0;
    }
    CountTable multi = aggregate(leaves);
    auto run = toydown_noise(multi, BudgetAllocation::equal_split(1.0, 3), false, 5);
    CHECK(run.noisy.type_count() == 1);
    CHECK(run.noisy.schema().labels == std::vector<std::string>{"total"});
    CHECK(run.ledger.type_labels == std::vector<std::string>{"total"});
    CHECK(run.noisy(0, 0) == multi.totals()(0, 0) + run.ledger.draws(0, 0));
  }

  SUBCASE("streams are keyed by type label, not column position") {
    CountTable leaves(h, TypeSchema::census7());
    StreamRng fill(3);
    for (NodeId leaf : h->leaves())
      for (int t = 0; t < 7; ++t) leaves.at(leaf, t) = static_cast<double>(fill.next_below(9));
    CountTable multi = aggregate(leaves);
    auto alloc = BudgetAllocation::equal_split(1.0, 3);
    auto full = toydown_noise(multi, alloc, true, 42);
    for (int t : {0, 3, 6}) {
      auto slice = toydown_noise(multi.type_column(t), alloc, true, 42);
      CHECK(bitwise_equal(slice.ledger.draws.col(0), full.ledger.draws.col(t)));
      CHECK(bitwise_equal(slice.noisy.values().col(0), full.noisy.values().col(t)));
    }
  }

  SUBCASE("input contract") {
    CountTable raw(h, TypeSchema::single());
    for (NodeId id = 0; id < h->node_count(); ++id) raw.at(id, 0) = 1.0;
    CHECK_FALSE(raw.consistent());
    CHECK_THROWS_AS(toydown_noise(raw, BudgetAllocation::equal_split(1.0, 3), false, 1),
                    InputError);
    CHECK_THROWS_AS(toydown_noise(table, BudgetAllocation::equal_split(1.0, 2), false, 1),
                    InputError);
    CHECK_THROWS_AS(toydown_noise(table, {1.0, 0.0, 1.0}, false, 1), InputError);
  }
}

TEST_CASE("per-node noise variance under a six-level budget") {
  auto [h, table] = build_homogeneous({2, 2, 2, 2, 2}, 1.0);
  BudgetAllocation alloc{9.0, 0.2, 0.2, 0.2, 0.2, 0.2};
  std::vector<double> draws;
  draws.reserve(62 * 800);
  for (int rep = 0; rep < 800; ++rep) {
    auto run = toydown_noise(table, alloc, false, replicate_seed(12, rep));
    for (NodeId id = 1; id < h->node_count(); ++id) draws.push_back(run.ledger.draws(id, 0));
  }
  auto m = moments(draws);
  CHECK(m.var == doctest::Approx(200.0).epsilon(0.03));
  CHECK(std::abs(m.mean) < 3.0 * std::sqrt(m.var / static_cast<double>(draws.size())));
}

TEST_CASE("workload noising") {
  auto [h, single] = build_homogeneous({4}, 10.0);
  CountTable leaves(h, TypeSchema({"a", "b"}));
  for (NodeId leaf : h->leaves()) {
    leaves.at(leaf, 0) = 6.0;
    leaves.at(leaf, 1) = 3.0;
  }
  CountTable table = aggregate(leaves);
  Workload workload = Workload::detailed_plus_total(table.schema(), 0.1);
  BudgetAllocation alloc{0.4, 0.6};

  SUBCASE("beta ledger follows share and level budget") {
    auto run = workload_noise(table, workload, alloc, 3);
    for (int l = 1; l <= 2; ++l) {
      CHECK(run.ledger.beta(0, l - 1) ==
            doctest::Approx(std::exp(-0.05 * alloc.level(l))).epsilon(1e-12));
      CHECK(run.ledger.beta(1, l - 1) ==
            doctest::Approx(std::exp(-0.45 * alloc.level(l))).epsilon(1e-12));
    }
    CHECK(bitwise_equal(run.ledger.budget_per_level, alloc.per_level));
  }

  SUBCASE("draws are integers and estimates are truth plus draw") {
    auto run = workload_noise(table, workload, alloc, 8);
    for (size_t q = 0; q < 2; ++q)
      for (NodeId id = 0; id < h->node_count(); ++id)
        for (int b = 0; b < run.ledger.draws[q].cols(); ++b) {
          double d = run.ledger.draws[q](id, b);
          CHECK(d == std::floor(d));
        }
    CHECK(run.estimates.values[1](0, 0) == table(0, 0) + table(0, 1) + run.ledger.draws[1](0, 0));
  }

  SUBCASE("single-histogram workload reduces to per-bin geometric draws") {
    Workload detailed = Workload::detailed(table.schema());
    auto run = workload_noise(table, detailed, alloc, 21);
    for (NodeId id = 0; id < h->node_count(); ++id)
      for (int b = 0; b < 2; ++b) {
        StreamRng rng(derive_stream(21, static_cast<std::uint64_t>(id), hash_label("detailed"),
                                    static_cast<std::uint64_t>(b)));
        double beta = geometric_beta(1.0, alloc.level(h->level(id)));
        CHECK(run.ledger.draws[0](id, b) ==
              static_cast<double>(sample_two_sided_geometric(beta, rng)));
      }
  }

  SUBCASE("same seed gives identical estimates") {
    auto a = workload_noise(table, workload, alloc, 5);
    auto b = workload_noise(table, workload, alloc, 5);
    CHECK(bitwise_equal(a.estimates.values[0], b.estimates.values[0]));
    CHECK(bitwise_equal(a.estimates.values[1], b.estimates.values[1]));
  }

  SUBCASE("root total estimate is unbiased") {
    std::vector<double> errs;
    double beta = geometric_beta(0.9, alloc.level(1));
    double var = 2.0 * beta / ((1.0 - beta) * (1.0 - beta));
    for (int rep = 0; rep < 3000; ++rep) {
      auto run = workload_noise(table, workload, alloc, replicate_seed(600, rep));
      errs.push_back(run.ledger.draws[1](0, 0));
    }
    auto m = moments(errs);
    CHECK(std::abs(m.mean) <= 3.0 * std::sqrt(var / 3000.0));
    CHECK(m.var == doctest::Approx(var).epsilon(0.15));
  }

  SUBCASE("input contract") {
    CHECK_THROWS_AS(workload_noise(table, workload, {0.4}, 1), InputError);
    Workload bad = workload;
    bad.shares = {0.5, 0.4};
    CHECK_THROWS_AS(workload_noise(table, bad, alloc, 1), InputError);
  }
}
