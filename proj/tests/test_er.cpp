#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cmath>
#include <numbers>
#include <vector>

#include "doctest.h"
#include "hierdp/er.hpp"
#include "test_support.hpp"

using namespace hierdp;

namespace {

PrecinctRecord precinct(std::string id, long long votes, long long candidate, double group,
                        double other) {
  PrecinctRecord rec;
  rec.id = std::move(id);
  rec.votes_cast = votes;
  rec.candidate_votes = candidate;
  rec.demographics.resize(2);
  rec.demographics << group, other;
  return rec;
}

ElectionData toy_election() {
  ElectionData data{TypeSchema({"group", "other"}), {}};
  data.records.push_back(precinct("a", 100, 48, 0.0, 10.0));
  data.records.push_back(precinct("b", 100, 87, 10.0, 0.0));
  data.records.push_back(precinct("c", 100, 67, 5.0, 5.0));
  data.records.push_back(precinct("d", 100, 50, 0.0, 0.0));
  return data;
}

}  // namespace

TEST_SUITE_BEGIN("er");

TEST_CASE("precinct shares") {
  PrecinctRecord rec = precinct("x", 40, 10, 3.0, 1.0);
  CHECK(rec.group_share() == doctest::Approx(0.75).epsilon(1e-15));
  CHECK(rec.candidate_share() == doctest::Approx(0.25).epsilon(1e-15));

  PrecinctRecord hollow = precinct("y", 0, 0, 0.0, 0.0);
  CHECK(std::isnan(hollow.group_share()));
  CHECK(hollow.candidate_share() == 0.0);
}

TEST_CASE("least squares fit") {
  SUBCASE("two points pin the line") {
    RegressionResult fit = fit_ols({0.0, 1.0}, {0.2, 0.9});
    CHECK(fit.slope == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(fit.intercept == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(fit.support_group() == doctest::Approx(0.9).epsilon(1e-12));
    CHECK(fit.support_complement() == doctest::Approx(0.2).epsilon(1e-12));
    CHECK(fit.points == 2);
  }

  SUBCASE("integer weights replicate repeated points") {
    std::vector<double> x{0.1, 0.8, 0.3};
    std::vector<double> y{0.2, 0.9, 0.4};
    std::vector<double> w{2.0, 3.0, 1.0};
    RegressionResult weighted = fit_ols(x, y, &w);
    std::vector<double> xr{0.1, 0.1, 0.8, 0.8, 0.8, 0.3};
    std::vector<double> yr{0.2, 0.2, 0.9, 0.9, 0.9, 0.4};
    RegressionResult repeated = fit_ols(xr, yr);
    CHECK(weighted.slope == doctest::Approx(repeated.slope).epsilon(1e-12));
    CHECK(weighted.intercept == doctest::Approx(repeated.intercept).epsilon(1e-12));
  }

  SUBCASE("zero-weight points change nothing at all") {
    std::vector<double> x{0.1, 0.7, 0.4};
    std::vector<double> y{0.5, 0.9, 0.6};
    std::vector<double> w{1.0, 0.0, 2.0};
    RegressionResult dropped = fit_ols(x, y, &w);
    std::vector<double> x2{0.1, 0.4};
    std::vector<double> y2{0.5, 0.6};
    std::vector<double> w2{1.0, 2.0};
    RegressionResult kept = fit_ols(x2, y2, &w2);
    CHECK(dropped.slope == kept.slope);
    CHECK(dropped.intercept == kept.intercept);
    CHECK(dropped.points == 2);
  }

  SUBCASE("shifting y shifts only the intercept") {
    std::vector<double> x{0.1, 0.5, 0.9, 0.3};
    std::vector<double> y{0.4, 0.6, 0.8, 0.5};
    std::vector<double> shifted = y;
    for (double& v : shifted) v += 0.25;
    RegressionResult base = fit_ols(x, y);
    RegressionResult moved = fit_ols(x, shifted);
    CHECK(moved.slope == doctest::Approx(base.slope).epsilon(1e-9));
    CHECK(moved.intercept == doctest::Approx(base.intercept + 0.25).epsilon(1e-9));
  }

  SUBCASE("input contract") {
    CHECK_THROWS_AS(fit_ols({0.0, 1.0}, {0.5}), InputError);
    std::vector<double> w{1.0, -1.0};
    CHECK_THROWS_AS(fit_ols({0.0, 1.0}, {0.5, 0.6}, &w), InputError);
    CHECK_THROWS_AS(fit_ols({}, {}), FitError);
    CHECK_THROWS_AS(fit_ols({0.5}, {0.5}), FitError);
    std::vector<double> one{1.0, 0.0};
    CHECK_THROWS_AS(fit_ols({0.0, 1.0}, {0.5, 0.6}, &one), FitError);
    CHECK_THROWS_WITH_AS(fit_ols({0.4, 0.4, 0.4}, {0.1, 0.2, 0.3}),
                         doctest::Contains("degenerate"), FitError);
  }
}

TEST_CASE("filtering and noise levels") {
  ElectionData data = toy_election();
  data.records[0].votes_cast = 5;
  CHECK(filter_precincts(data.records, 10).size() == 3);
  CHECK(filter_precincts(data.records, 100).size() == 3);
  CHECK(filter_precincts(data.records, 101).empty());

  CHECK(gaussian_sigma(0.0, 10, 2) == 0.0);
  CHECK(gaussian_sigma(160.0, 10, 2) ==
        doctest::Approx(160.0 * std::sqrt(std::numbers::pi) / (20.0 * std::numbers::sqrt2))
            .epsilon(1e-12));
  CHECK(std::abs(gaussian_sigma(160.0, 10, 2) - 10.03) < 0.005);
  CHECK_THROWS_AS(gaussian_sigma(-1.0, 10, 2), InputError);
  CHECK_THROWS_AS(gaussian_sigma(1.0, 0, 2), InputError);
  CHECK_THROWS_AS(ErNoiser::gaussian(-0.5), InputError);
}

TEST_CASE("variance formatting") {
  CHECK(format_variance_1e8(3.6123e-4) == "36000");
  CHECK(format_variance_1e8(2.47e-6) == "250");
  CHECK(format_variance_1e8(5.87e-8) == "5.9");
  CHECK(format_variance_1e8(9.96e-8) == "10");
  CHECK(format_variance_1e8(0.0) == "0");
}

TEST_CASE("experiment mechanics on a toy county") {
  ElectionData data = toy_election();

  SUBCASE("zero-total precincts are dropped and counted") {
    ErSummary s = noisy_er_experiment(data, ErNoiser::gaussian(0.0), PrecinctMode::kAll, 1, 5);
    REQUIRE(s.replicates.size() == 1);
    CHECK(s.replicates[0].points == 3);
    CHECK(s.replicates[0].dropped == 1);
    CHECK(s.fit_failures == 0);
  }

  SUBCASE("filtering happens before the drop check") {
    data.records[2].votes_cast = 5;
    ErSummary s =
        noisy_er_experiment(data, ErNoiser::gaussian(0.0), PrecinctMode::kFiltered, 1, 5);
    REQUIRE(s.replicates.size() == 1);
    CHECK(s.replicates[0].points == 2);
    CHECK(s.replicates[0].dropped == 1);
  }

  SUBCASE("degenerate replicates count as fit failures") {
    ElectionData flat{TypeSchema({"group", "other"}), {}};
    flat.records.push_back(precinct("a", 100, 40, 5.0, 5.0));
    flat.records.push_back(precinct("b", 100, 60, 5.0, 5.0));
    ErSummary s = noisy_er_experiment(flat, ErNoiser::gaussian(0.0), PrecinctMode::kAll, 1, 5);
    CHECK(s.fit_failures == 1);
    CHECK(s.replicates.empty());
    CHECK(s.mean_group == 0.0);
  }

  SUBCASE("input contract") {
    CHECK_THROWS_AS(
        noisy_er_experiment(data, ErNoiser::gaussian(1.0), PrecinctMode::kAll, 0, 5),
        InputError);
    ElectionData empty{TypeSchema({"group", "other"}), {}};
    CHECK_THROWS_AS(
        noisy_er_experiment(empty, ErNoiser::gaussian(1.0), PrecinctMode::kAll, 1, 5),
        InputError);
    ErNoiser bare;  // toydown kind without an allocation
    CHECK_THROWS_AS(noisy_er_experiment(data, bare, PrecinctMode::kAll, 1, 5), InputError);
    ErNoiser deep = ErNoiser::toydown(BudgetAllocation::equal_split(1.0, 3));
    CHECK_THROWS_AS(noisy_er_experiment(data, deep, PrecinctMode::kAll, 1, 5), InputError);
    ElectionData ragged = toy_election();
    ragged.records[1].demographics.resize(3);
    CHECK_THROWS_AS(
        noisy_er_experiment(ragged, ErNoiser::gaussian(1.0), PrecinctMode::kAll, 1, 5),
        InputError);
  }
}

TEST_CASE("synthetic polarized county") {
  PolarizedCountyParams params;
  ElectionData county = make_polarized_county(params, 1234);

  SUBCASE("shape and split") {
    REQUIRE(county.records.size() == 800);
    CHECK(county.records[0].id == "p0");
    CHECK(county.records[799].id == "p799");
    for (int p = 0; p < 600; ++p) {
      const auto& rec = county.records[p];
      CHECK(rec.votes_cast >= 360);
      CHECK(rec.votes_cast <= 1125);
      CHECK(rec.candidate_votes <= rec.votes_cast);
      CHECK(rec.demographics.sum() >= 800.0);
      CHECK(rec.demographics.sum() <= 2500.0);
    }
    for (int p = 600; p < 800; ++p) {
      const auto& rec = county.records[p];
      CHECK(rec.votes_cast <= 9);
      CHECK(rec.candidate_votes <= rec.votes_cast);
      CHECK(rec.demographics.sum() >= 3.0);
      CHECK(rec.demographics.sum() <= 40.0);
    }
    CHECK(filter_precincts(county.records, 10).size() == 600);
  }

  SUBCASE("regular precincts carry the planted line") {
    std::vector<double> xs, ys;
    for (const auto& rec : filter_precincts(county.records, 10)) {
      xs.push_back(rec.group_share());
      ys.push_back(rec.candidate_share());
    }
    RegressionResult fit = fit_ols(xs, ys);
    CHECK(std::abs(fit.support_group() - params.support_group) < 0.01);
    CHECK(std::abs(fit.support_complement() - params.support_complement) < 0.01);
  }

  SUBCASE("input contract") {
    params.precincts = 3;
    CHECK_THROWS_AS(make_polarized_county(params, 1), InputError);
    params.precincts = 800;
    params.tiny_fraction = 1.0;
    CHECK_THROWS_AS(make_polarized_county(params, 1), InputError);
  }
}

TEST_CASE("noiseless experiments reproduce the direct fit") {
  ElectionData county = make_polarized_county(PolarizedCountyParams{}, 98);

  std::vector<double> xs, ys;
  for (const auto& rec : county.records) {
    xs.push_back(rec.group_share());
    ys.push_back(rec.candidate_share());
  }
  RegressionResult direct = fit_ols(xs, ys);

  SUBCASE("a zero-sigma gaussian is exactly transparent") {
    ErSummary s = noisy_er_experiment(county, ErNoiser::gaussian(0.0), PrecinctMode::kAll, 2,
                                      777, 10, true);
    REQUIRE(s.replicates.size() == 2);
    CHECK(s.var_group == 0.0);
    CHECK(s.var_complement == 0.0);
    CHECK(s.mean_group == direct.support_group());
    CHECK(s.mean_complement == direct.support_complement());
    REQUIRE(s.points.size() == 1600);
    for (int p = 0; p < 800; ++p) {
      CHECK(s.points[p][0] == 0.0);
      CHECK(s.points[p][1] == xs[p]);
      CHECK(s.points[p][2] == ys[p]);
    }
  }

  SUBCASE("an enormous budget pins the hierarchical pipeline") {
    ErNoiser noiser = ErNoiser::toydown(BudgetAllocation::equal_split(1e9, 2));
    ErSummary s = noisy_er_experiment(county, noiser, PrecinctMode::kAll, 2, 777);
    REQUIRE(s.replicates.size() == 2);
    CHECK(s.var_group < 1e-12);
    CHECK(std::abs(s.mean_group - direct.support_group()) < 1e-6);
    CHECK(std::abs(s.mean_complement - direct.support_complement()) < 1e-6);
  }
}

TEST_CASE("noise inflates the unfiltered fit most") {
  ElectionData county = make_polarized_county(PolarizedCountyParams{}, 4321);
  ErNoiser noiser = ErNoiser::toydown(BudgetAllocation::equal_split(1.0, 2));
  ErSummary all = noisy_er_experiment(county, noiser, PrecinctMode::kAll, 8, 99);
  ErSummary filtered = noisy_er_experiment(county, noiser, PrecinctMode::kFiltered, 8, 99);
  ErSummary weighted = noisy_er_experiment(county, noiser, PrecinctMode::kWeighted, 8, 99);
  REQUIRE(all.replicates.size() == 8);
  REQUIRE(filtered.replicates.size() == 8);
  REQUIRE(weighted.replicates.size() == 8);
  CHECK(all.var_group > filtered.var_group);
  CHECK(all.var_group > weighted.var_group);
  CHECK(all.var_complement > filtered.var_complement);
  CHECK(all.var_complement > weighted.var_complement);
}
