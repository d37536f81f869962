#include "hierdp/er.hpp"

#include <cmath>
#include <cstdio>
#include <limits>
#include <numbers>

namespace hierdp {

double PrecinctRecord::group_share() const {
  double total = demographics.sum();
  if (!(total > 0)) return std::numeric_limits<double>::quiet_NaN();
  return demographics[0] / total;
}

double PrecinctRecord::candidate_share() const {
  if (votes_cast <= 0) return 0.0;
  return static_cast<double>(candidate_votes) / static_cast<double>(votes_cast);
}

RegressionResult fit_ols(const std::vector<double>& x, const std::vector<double>& y,
                         const std::vector<double>* weights) {
  if (x.size() != y.size() || (weights && weights->size() != x.size()))
    throw InputError("regression inputs must have equal length");

  double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
  int points = 0;
  for (size_t i = 0; i < x.size(); ++i) {
    double w = weights ? (*weights)[i] : 1.0;
    if (w < 0) throw InputError("regression weights must be non-negative");
    if (w == 0) continue;
    ++points;
    sw += w;
    sx += w * x[i];
    sy += w * y[i];
    sxx += w * x[i] * x[i];
    sxy += w * x[i] * y[i];
  }
  if (points < 2) throw FitError("regression needs at least two weighted points");
  double mx = sx / sw;
  double var_x = sxx / sw - mx * mx;
  if (!(var_x > 1e-12 * (1.0 + mx * mx)))
    throw FitError("regression predictor is degenerate (all shares equal)");

  Eigen::Matrix2d ata;
  ata << sw, sx, sx, sxx;
  Eigen::Vector2d aty(sy, sxy);
  Eigen::Vector2d beta = ata.ldlt().solve(aty);

  RegressionResult r;
  r.intercept = beta[0];
  r.slope = beta[1];
  r.points = points;
  return r;
}

std::vector<PrecinctRecord> filter_precincts(const std::vector<PrecinctRecord>& records,
                                             long long min_votes) {
  std::vector<PrecinctRecord> out;
  out.reserve(records.size());
  for (const auto& r : records)
    if (r.votes_cast >= min_votes) out.push_back(r);
  return out;
}

double gaussian_sigma(double mean_l1_error, int b, int c) {
  if (mean_l1_error < 0) throw InputError("target error must be non-negative");
  if (b < 1 || c < 1) throw InputError("table dimensions must be positive");
  // E|N(0, sigma)| = sigma sqrt(2/pi), summed over b*c entries.
  return mean_l1_error * std::sqrt(std::numbers::pi) /
         (static_cast<double>(b) * c * std::numbers::sqrt2);
}

ErNoiser ErNoiser::toydown(BudgetAllocation a, AdjustMode mode) {
  ErNoiser n;
  n.kind = Kind::kToydown;
  n.alloc = std::move(a);
  n.sweep_mode = mode;
  return n;
}

ErNoiser ErNoiser::gaussian(double sigma) {
  if (sigma < 0) throw InputError("gaussian sigma must be non-negative");
  ErNoiser n;
  n.kind = Kind::kGaussian;
  n.sigma = sigma;
  return n;
}

namespace {

// County root over one leaf per precinct, demographic counts as leaf values.
CountTable precinct_table(const ElectionData& data, const HierarchyPtr& hier) {
  CountTable leaves(hier, data.schema);
  const auto& ids = hier->leaves();
  for (size_t i = 0; i < data.records.size(); ++i)
    for (int t = 0; t < data.schema.size(); ++t)
      leaves.at(ids[i], t) = data.records[i].demographics[t];
  return aggregate(leaves);
}

}  // namespace

ErSummary noisy_er_experiment(const ElectionData& data, const ErNoiser& noiser,
                              PrecinctMode mode, int replicates, std::uint64_t seed,
                              long long min_votes, bool keep_points) {
  if (replicates < 1) throw InputError("experiment needs at least one replicate");
  if (data.records.empty()) throw InputError("experiment needs precinct records");
  int P = static_cast<int>(data.records.size());
  int T = data.schema.size();
  for (const auto& r : data.records)
    if (r.demographics.size() != T)
      throw InputError("every precinct must carry one count per type");

  HierarchyPtr hier = Hierarchy::from_level_child_counts({{P}});
  std::optional<CountTable> base;
  if (noiser.kind == ErNoiser::Kind::kToydown) {
    if (!noiser.alloc) throw InputError("toydown noiser needs a budget allocation");
    if (noiser.alloc->depth() != 2) throw InputError("precinct noising uses a depth-2 tree");
    base.emplace(precinct_table(data, hier));
  }

  ErSummary summary;
  summary.mode = mode;
  Eigen::MatrixXd noised(P, T);
  for (int rep = 0; rep < replicates; ++rep) {
    std::uint64_t rep_seed = replicate_seed(seed, rep);
    if (noiser.kind == ErNoiser::Kind::kToydown) {
      auto run = toydown_noise(*base, *noiser.alloc, true, rep_seed);
      AdjustedTable adj = topdown_sweep(run.noisy, noiser.sweep_mode);
      const auto& ids = hier->leaves();
      for (int p = 0; p < P; ++p) noised.row(p) = adj.table.values().row(ids[p]);
    } else {
      for (int p = 0; p < P; ++p)
        for (int t = 0; t < T; ++t) {
          StreamRng rng(derive_stream(rep_seed, static_cast<std::uint64_t>(p),
                                      hash_label(data.schema.labels[t])));
          noised(p, t) = data.records[p].demographics[t] + sample_gaussian(noiser.sigma, rng);
        }
    }

    std::vector<double> xs, ys, ws;
    int dropped = 0;
    for (int p = 0; p < P; ++p) {
      const auto& rec = data.records[p];
      if (mode == PrecinctMode::kFiltered && rec.votes_cast < min_votes) continue;
      double total = noised.row(p).sum();
      if (!(total > 0)) {
        ++dropped;
        continue;
      }
      xs.push_back(noised(p, 0) / total);
      ys.push_back(rec.candidate_share());
      if (mode == PrecinctMode::kWeighted) ws.push_back(static_cast<double>(rec.votes_cast));
      if (keep_points)
        summary.points.push_back({static_cast<double>(rep), xs.back(), ys.back()});
    }

    try {
      RegressionResult fit =
          fit_ols(xs, ys, mode == PrecinctMode::kWeighted ? &ws : nullptr);
      summary.replicates.push_back(
          {fit.support_group(), fit.support_complement(), fit.points, dropped});
    } catch (const FitError&) {
      ++summary.fit_failures;
    }
  }

  int n = static_cast<int>(summary.replicates.size());
  if (n > 0) {
    for (const auto& r : summary.replicates) {
      summary.mean_group += r.support_group;
      summary.mean_complement += r.support_complement;
    }
    summary.mean_group /= n;
    summary.mean_complement /= n;
    if (n > 1) {
      for (const auto& r : summary.replicates) {
        summary.var_group += (r.support_group - summary.mean_group) *
                             (r.support_group - summary.mean_group);
        summary.var_complement += (r.support_complement - summary.mean_complement) *
                                  (r.support_complement - summary.mean_complement);
      }
      summary.var_group /= n - 1;
      summary.var_complement /= n - 1;
    }
  }
  return summary;
}

std::string format_variance_1e8(double variance) {
  double units = variance * 1e8;
  if (units == 0) return "0";
  double mag = std::pow(10.0, std::floor(std::log10(std::abs(units))) - 1);
  double rounded = std::round(units / mag) * mag;
  char buf[64];
  if (std::abs(rounded) >= 10)
    std::snprintf(buf, sizeof buf, "%.0f", rounded);
  else
    std::snprintf(buf, sizeof buf, "%.2g", rounded);
  return buf;
}

ElectionData make_polarized_county(const PolarizedCountyParams& params, std::uint64_t seed) {
  if (params.precincts < 4) throw InputError("county needs at least four precincts");
  if (params.tiny_fraction < 0 || params.tiny_fraction >= 1)
    throw InputError("tiny fraction must lie in [0,1)");

  ElectionData data{TypeSchema({"group", "other"}), {}};
  int tiny = static_cast<int>(std::lround(params.precincts * params.tiny_fraction));
  int regular = params.precincts - tiny;
  for (int p = 0; p < params.precincts; ++p) {
    StreamRng rng(derive_stream(seed, 0x636f756eULL, static_cast<std::uint64_t>(p)));
    PrecinctRecord rec;
    rec.id = "p" + std::to_string(p);
    rec.demographics.resize(2);
    if (p < regular) {
      double x = 0.05 + 0.90 * rng.next_unit();
      long long vap = params.regular_vap_min +
                      static_cast<long long>(rng.next_below(
                          params.regular_vap_max - params.regular_vap_min + 1));
      long long group = std::llround(x * static_cast<double>(vap));
      rec.demographics << static_cast<double>(group), static_cast<double>(vap - group);
      rec.votes_cast = std::llround(params.turnout * static_cast<double>(vap));
      double y = params.support_complement +
                 (params.support_group - params.support_complement) * rec.group_share() +
                 params.jitter * (2.0 * rng.next_unit() - 1.0);
      rec.candidate_votes = std::llround(y * static_cast<double>(rec.votes_cast));
    } else {
      long long vap = params.tiny_vap_min +
                      static_cast<long long>(
                          rng.next_below(params.tiny_vap_max - params.tiny_vap_min + 1));
      long long group = static_cast<long long>(rng.next_below(vap + 1));
      rec.demographics << static_cast<double>(group), static_cast<double>(vap - group);
      rec.votes_cast = static_cast<long long>(rng.next_below(10));
      rec.candidate_votes =
          rec.votes_cast > 0 ? static_cast<long long>(rng.next_below(rec.votes_cast + 1)) : 0;
    }
    data.records.push_back(std::move(rec));
  }
  return data;
}

}  // namespace hierdp
