#include "b3/validate.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "b3/errors.hpp"

namespace b3 {

void ValidationConfig::validate() const {
  if (!(significance > 0.0 && significance < 1.0))
    throw ConfigError("validation: significance must lie in (0,1)");
  if (n_sets < 1) throw ConfigError("validation: n_sets must be >= 1");
  if (w_grid.empty()) throw ConfigError("validation: empty W grid");
  for (double w : w_grid)
    if (!(w >= 0.0 && w <= 1.0)) throw ConfigError("validation: W must lie in [0,1]");
  if (!(arr_from < arr_to)) throw ConfigError("validation: ARR window is empty");
}

SplitResult split_training(const std::vector<Observation>& observations, double cutoff) {
  SplitResult out;
  for (std::size_t i = 0; i < observations.size(); ++i) {
    const Observation& o = observations[i];
    // Surveys and censuses are dated by their collection year, so an entire
    // retrospective series moves together; VR points carry their own year.
    const double collected = o.survey_year ? *o.survey_year : o.ref_year;
    if (collected < cutoff)
      out.training.push_back(static_cast<int>(i));
    else
      out.test.push_back(static_cast<int>(i));
  }
  return out;
}

double interval_score(double lower, double upper, double observed, double significance) {
  if (!(lower > 0.0) || !(upper > lower))
    throw std::invalid_argument("interval_score: need 0 < lower < upper");
  if (!(observed > 0.0)) throw std::invalid_argument("interval_score: observed must be > 0");
  double score = std::log(upper) - std::log(lower);
  if (observed < lower) score += 2.0 / significance * (std::log(lower) - std::log(observed));
  if (observed > upper) score += 2.0 / significance * (std::log(observed) - std::log(upper));
  return score;
}

double interval_score_raw(double lower, double upper, double observed, double significance) {
  if (!(upper > lower)) throw std::invalid_argument("interval_score_raw: upper <= lower");
  double score = upper - lower;
  if (observed < lower) score += 2.0 / significance * (lower - observed);
  if (observed > upper) score += 2.0 / significance * (observed - upper);
  return score;
}

CoverageResult coverage(const std::vector<double>& observed,
                        const std::vector<std::pair<double, double>>& intervals) {
  if (observed.size() != intervals.size())
    throw std::invalid_argument("coverage: size mismatch");
  CoverageResult out;
  if (observed.empty()) return out;
  for (std::size_t i = 0; i < observed.size(); ++i) {
    if (observed[i] < intervals[i].first)
      out.below += 1.0;
    else if (observed[i] > intervals[i].second)
      out.above += 1.0;
    else
      out.inside += 1.0;
  }
  const auto n = static_cast<double>(observed.size());
  out.inside /= n;
  out.below /= n;
  out.above /= n;
  return out;
}

std::vector<std::vector<int>> sample_validation_sets(
    const std::vector<std::vector<int>>& candidates_by_country, int n_sets,
    std::uint64_t seed) {
  for (const auto& c : candidates_by_country)
    if (c.empty())
      throw std::invalid_argument("sample_validation_sets: empty candidate pool");
  Rng rng(seed, 0x5E75);
  std::vector<std::vector<int>> sets;
  sets.reserve(static_cast<std::size_t>(n_sets));
  for (int s = 0; s < n_sets; ++s) {
    std::vector<int> set;
    set.reserve(candidates_by_country.size());
    for (const auto& c : candidates_by_country) set.push_back(c[rng.index(c.size())]);
    sets.push_back(std::move(set));
  }
  return sets;
}

std::vector<double> arr_draws(const Eigen::MatrixXd& alpha, const CoefficientLayout& coeffs,
                              double from_year, double to_year) {
  const Eigen::VectorXd psi_from = psi_draws_at(alpha, coeffs, from_year);
  const Eigen::VectorXd psi_to = psi_draws_at(alpha, coeffs, to_year);
  std::vector<double> out(static_cast<std::size_t>(psi_from.size()));
  const double span = to_year - from_year;
  for (Eigen::Index j = 0; j < psi_from.size(); ++j)
    out[static_cast<std::size_t>(j)] = 100.0 * (psi_from(j) - psi_to(j)) / span;
  return out;
}

PredictiveResult predictive_leftout(const PredictiveContext& ctx, const Observation& obs,
                                    Rng& rng) {
  const auto it = ctx.by_country.find(obs.country);
  if (it == ctx.by_country.end())
    throw DataError("predictive_leftout: no training posterior for " + obs.country);
  const CountryPredictive& cp = it->second;
  const Model& model = *ctx.training_model;
  const ParamLayout& layout = model.layout();

  const double v = resolve_sampling_sd(obs, model.config(), ctx.births);
  const Eigen::VectorXd psi = psi_draws_at(cp.alpha, *cp.coeffs, obs.ref_year);
  const auto total = static_cast<std::size_t>(psi.size());
  std::vector<double> draws(total);

  if (obs.source_type == SourceType::vr) {
    if (obs.vr_status != VrStatus::complete)
      throw DataError("predictive_leftout: incomplete-VR observations are not scored");
    for (std::size_t j = 0; j < total; ++j)
      draws[j] = std::exp(psi(static_cast<Eigen::Index>(j)) + v * rng.normal());
  } else {
    const SourceGroup group = group_of(obs.source_type);
    const int gi = static_cast<int>(group);
    const int subtype = static_cast<int>(obs.source_type);
    if (layout.omega(subtype) < 0 || layout.mu0(gi) < 0)
      throw DataError(std::string("predictive_leftout: source type ") +
                      to_label(obs.source_type) + " absent from the training model");
    const bool repeated = repeated_group(group);
    const bool normal_branch = normal_error_group(group);

    double zc = 0.0;
    if (repeated) {
      const auto z = obs.retrospective_period();
      if (!z) throw DataError("predictive_leftout: observation without survey_year");
      zc = *z - model.config().retrospective_center;
    }

    int series_idx = -1;
    for (std::size_t s = 0; s < model.series().size(); ++s)
      if (model.series()[s].id == obs.series_id) series_idx = static_cast<int>(s);

    const auto omegas = ctx.sample->draws_of(layout.omega(subtype));
    std::vector<double> nus;
    if (!normal_branch) {
      if (layout.nu() < 0)
        throw DataError("predictive_leftout: no t-family draws in the training model");
      nus = ctx.sample->draws_of(layout.nu());
    }
    std::vector<double> b0, b1, mu0s, phi0s, mu1s, phi1s;
    if (series_idx >= 0) {
      b0 = ctx.sample->draws_of(layout.beta0(series_idx));
      b1 = ctx.sample->draws_of(layout.beta1(series_idx));
    } else if (repeated) {
      mu0s = ctx.sample->draws_of(layout.mu0(gi));
      phi0s = ctx.sample->draws_of(layout.phi0(gi));
      mu1s = ctx.sample->draws_of(layout.mu1(gi));
      phi1s = ctx.sample->draws_of(layout.phi1(gi));
    } else {
      mu0s = ctx.sample->draws_of(layout.mu0(gi));
    }

    for (std::size_t j = 0; j < total; ++j) {
      double phi;
      if (series_idx >= 0) {
        phi = b0[j] + b1[j] * zc;
      } else if (repeated) {
        // Unseen series: level and slope drawn fresh from the hierarchy.
        const double beta0 = mu0s[j] + phi0s[j] * rng.normal();
        const double beta1 = mu1s[j] + phi1s[j] * rng.normal();
        phi = beta0 + beta1 * zc;
      } else {
        phi = mu0s[j];
      }
      const double scale = obs_scale(omegas[j], v);
      const double noise = normal_branch ? rng.normal() : rng.student_t(nus[j]);
      draws[j] = std::exp(psi(static_cast<Eigen::Index>(j)) + phi + scale * noise);
    }
  }

  const auto q = stats::posterior_summary(std::move(draws));
  PredictiveResult out;
  out.median = q.median;
  out.lower90 = q.lower;
  out.upper90 = q.upper;
  return out;
}

namespace {

double safe_median_at(const Eigen::MatrixXd& alpha, const CoefficientLayout& coeffs,
                      double year) {
  try {
    const Eigen::VectorXd psi = psi_draws_at(alpha, coeffs, year);
    std::vector<double> rates(static_cast<std::size_t>(psi.size()));
    for (Eigen::Index j = 0; j < psi.size(); ++j)
      rates[static_cast<std::size_t>(j)] = std::exp(psi(j));
    return stats::median(std::move(rates));
  } catch (const std::out_of_range&) {
    return std::numeric_limits<double>::quiet_NaN();
  }
}

}  // namespace

std::vector<EstimateAggregate> estimate_errors(
    const std::vector<CountryEstimates>& full, const std::vector<CountryEstimates>& training,
    const ValidationConfig& cfg, double w) {
  std::map<std::string, const CountryEstimates*> train_by_code;
  for (const auto& t : training) train_by_code[t.country] = &t;

  struct Cell {
    std::vector<double> err, abs_err, score;
    double below = 0.0, above = 0.0;
  };
  std::vector<Cell> cells(cfg.estimate_years.size() + 1);

  for (const auto& f : full) {
    const auto it = train_by_code.find(f.country);
    if (it == train_by_code.end()) continue;
    const CountryEstimates& t = *it->second;
    for (std::size_t y = 0; y < cfg.estimate_years.size(); ++y) {
      const double full_med = f.median[y];
      const double train_med = t.median[y];
      if (!std::isfinite(full_med) || !std::isfinite(train_med)) continue;
      Cell& cell = cells[y];
      const double e = full_med - train_med;
      cell.err.push_back(100.0 * e / full_med);
      cell.abs_err.push_back(std::abs(100.0 * e / full_med));
      cell.score.push_back(
          interval_score(t.lower90[y], t.upper90[y], full_med, cfg.significance));
      if (full_med < t.lower90[y]) cell.below += 1.0;
      if (full_med > t.upper90[y]) cell.above += 1.0;
    }
    if (std::isfinite(f.arr_median) && std::isfinite(t.arr_median)) {
      Cell& cell = cells.back();
      const double e = f.arr_median - t.arr_median;
      cell.err.push_back(e);
      cell.abs_err.push_back(std::abs(e));
      cell.score.push_back(
          interval_score_raw(t.arr_lower90, t.arr_upper90, f.arr_median, cfg.significance));
      if (f.arr_median < t.arr_lower90) cell.below += 1.0;
      if (f.arr_median > t.arr_upper90) cell.above += 1.0;
    }
  }

  auto mean_of = [](const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
  };

  std::vector<EstimateAggregate> out;
  for (std::size_t c = 0; c < cells.size(); ++c) {
    EstimateAggregate agg;
    agg.w = w;
    if (c < cfg.estimate_years.size()) {
      agg.target = "u5mr" + std::to_string(static_cast<int>(cfg.estimate_years[c]));
    } else {
      agg.target = "arr" + std::to_string(static_cast<int>(cfg.arr_from)) + "_" +
                   std::to_string(static_cast<int>(cfg.arr_to));
    }
    const Cell& cell = cells[c];
    agg.n_countries = static_cast<int>(cell.err.size());
    if (!cell.err.empty()) {
      agg.median_err = stats::median(cell.err);
      agg.median_abs_err = stats::median(cell.abs_err);
      agg.median_score = stats::median(cell.score);
      agg.mean_err = mean_of(cell.err);
      agg.mean_abs_err = mean_of(cell.abs_err);
      agg.mean_score = mean_of(cell.score);
      agg.pct_below = 100.0 * cell.below / agg.n_countries;
      agg.pct_above = 100.0 * cell.above / agg.n_countries;
    }
    out.push_back(std::move(agg));
  }
  return out;
}

namespace {

struct ObsMetrics {
  double err = 0.0;
  double rel = 0.0;
  double score = 0.0;
  int side = 0;  // -1 below, 0 inside, +1 above
};

struct CountrySide {
  std::vector<CountryEstimates> estimates;
  std::map<std::string, CountryPredictive> predictive;
};

CountrySide country_side(const Model& model, const PosteriorSample& sample,
                         const GlobalChangeDist& dist, double w,
                         const ValidationConfig& vc, std::uint64_t seed,
                         std::uint64_t salt) {
  CountrySide out;
  for (std::size_t c = 0; c < model.countries().size(); ++c) {
    const auto& cm = model.countries()[c];
    const int ci = static_cast<int>(c);
    Rng rng(seed, splitmix64(salt * 1000003 + c));
    const Eigen::MatrixXd alpha = alpha_eff_draws(model, ci, sample);
    const Eigen::VectorXd s2 = sigma2_draws(model, ci, sample);
    Eigen::MatrixXd extended =
        project_coefficients(alpha, s2, cm.coeffs.p_eff(), dist, w, rng);

    CountryEstimates est;
    est.country = cm.code;
    est.years = vc.estimate_years;
    for (double year : vc.estimate_years) {
      est.median.push_back(safe_median_at(extended, cm.coeffs, year));
      try {
        const Eigen::VectorXd psi = psi_draws_at(extended, cm.coeffs, year);
        std::vector<double> rates(static_cast<std::size_t>(psi.size()));
        for (Eigen::Index j = 0; j < psi.size(); ++j)
          rates[static_cast<std::size_t>(j)] = std::exp(psi(j));
        const auto q = stats::posterior_summary(std::move(rates));
        est.lower90.push_back(q.lower);
        est.upper90.push_back(q.upper);
      } catch (const std::out_of_range&) {
        est.lower90.push_back(std::numeric_limits<double>::quiet_NaN());
        est.upper90.push_back(std::numeric_limits<double>::quiet_NaN());
      }
    }
    est.u5mr_1990 = safe_median_at(extended, cm.coeffs, vc.arr_from);
    try {
      const auto arr = arr_draws(extended, cm.coeffs, vc.arr_from, vc.arr_to);
      const auto q = stats::posterior_summary(arr);
      est.arr_median = q.median;
      est.arr_lower90 = q.lower;
      est.arr_upper90 = q.upper;
    } catch (const std::out_of_range&) {
      est.arr_median = std::numeric_limits<double>::quiet_NaN();
    }
    out.estimates.push_back(std::move(est));

    CountryPredictive cp;
    cp.coeffs = &cm.coeffs;
    cp.alpha = std::move(extended);
    out.predictive.emplace(cm.code, std::move(cp));
  }
  return out;
}

MeasureStat across_sets(std::vector<double> values) {
  MeasureStat stat;
  if (values.empty()) return stat;
  stat.sd_of_sets = values.size() >= 2 ? std::sqrt(stats::variance(values)) : 0.0;
  stat.median_of_sets = stats::median(std::move(values));
  return stat;
}

}  // namespace

ValidationReport run_validation(const ValidationRunInputs& inputs) {
  const ValidationConfig& vc = inputs.config;
  vc.validate();
  ValidationReport report;

  const SplitResult split = split_training(inputs.observations, vc.cutoff);
  if (split.training.empty()) throw DataError("validation: training set is empty");
  if (split.test.empty()) throw DataError("validation: no observations after the cutoff");

  std::vector<Observation> training_obs;
  training_obs.reserve(split.training.size());
  for (int i : split.training)
    training_obs.push_back(inputs.observations[static_cast<std::size_t>(i)]);

  double max_test_year = vc.cutoff;
  for (int i : split.test)
    max_test_year =
        std::max(max_test_year, inputs.observations[static_cast<std::size_t>(i)].ref_year);

  Model full_model = Model::build(inputs.observations, inputs.model_config, inputs.births);
  const FitResult full_fit = run_global(full_model, inputs.sampler_config);

  ModelConfig train_cfg = inputs.model_config;
  train_cfg.projection_year = std::max(train_cfg.projection_year, max_test_year + 0.5);
  Model train_model = Model::build(std::move(training_obs), train_cfg, inputs.births);
  const FitResult train_fit = run_global(train_model, inputs.sampler_config);

  auto dist_of = [](const Model& m, const PosteriorSample& s) {
    std::vector<double> medians;
    for (std::size_t c = 0; c < m.countries().size(); ++c) {
      const Eigen::MatrixXd alpha = alpha_eff_draws(m, static_cast<int>(c), s);
      const auto diffs = median_first_differences(alpha, m.countries()[c].coeffs);
      medians.insert(medians.end(), diffs.begin(), diffs.end());
    }
    return build_global_dist(medians);
  };
  const GlobalChangeDist full_dist = dist_of(full_model, full_fit.sample);
  const GlobalChangeDist train_dist = dist_of(train_model, train_fit.sample);

  // Full-data reference estimates at a fixed W.
  const CountrySide full_side =
      country_side(full_model, full_fit.sample, full_dist, vc.reference_w, vc,
                   vc.seed, 1);

  // Country eligibility: high mortality in 1990 (per the updated estimates)
  // and at least one training observation.
  std::map<std::string, const CountryEstimates*> full_by_code;
  std::set<std::string> eligible;
  for (const auto& est : full_side.estimates) {
    full_by_code[est.country] = &est;
    bool has_training = false;
    for (const auto& cm : train_model.countries()) has_training |= cm.code == est.country;
    if (std::isfinite(est.u5mr_1990) && est.u5mr_1990 >= vc.high_mortality_threshold &&
        has_training)
      eligible.insert(est.country);
  }

  // Candidate left-out observations per split, excluding incomplete VR and
  // source types the training model never saw.
  const auto& layout = train_model.layout();
  std::map<std::string, std::vector<int>> candidates_before, candidates_after;
  int skipped_unseen_type = 0;
  for (int i : split.test) {
    const Observation& o = inputs.observations[static_cast<std::size_t>(i)];
    if (!eligible.count(o.country)) continue;
    if (o.source_type == SourceType::vr && o.vr_status != VrStatus::complete) continue;
    if (o.source_type != SourceType::vr) {
      if (layout.omega(static_cast<int>(o.source_type)) < 0 ||
          layout.mu0(static_cast<int>(group_of(o.source_type))) < 0) {
        ++skipped_unseen_type;
        continue;
      }
    }
    if (o.ref_year < vc.cutoff)
      candidates_before[o.country].push_back(i);
    else
      candidates_after[o.country].push_back(i);
  }
  if (skipped_unseen_type > 0)
    report.notes.push_back(std::to_string(skipped_unseen_type) +
                           " left-out observations skipped: source type absent from "
                           "the training data");

  struct SplitPool {
    std::string label;
    std::vector<std::string> countries;
    std::vector<std::vector<int>> candidates;
    std::vector<std::vector<int>> sets;
  };
  auto make_pool = [&](const std::map<std::string, std::vector<int>>& cands,
                       const std::string& label, std::uint64_t salt) {
    SplitPool pool;
    pool.label = label;
    for (const auto& [code, list] : cands) {
      pool.countries.push_back(code);
      pool.candidates.push_back(list);
    }
    if (!pool.candidates.empty())
      pool.sets = sample_validation_sets(pool.candidates, vc.n_sets, vc.seed + salt);
    return pool;
  };
  const int cutoff_label = static_cast<int>(vc.cutoff) - 1;
  std::vector<SplitPool> pools;
  pools.push_back(make_pool(candidates_before, "le" + std::to_string(cutoff_label), 11));
  pools.push_back(make_pool(candidates_after, "gt" + std::to_string(cutoff_label), 13));
  for (const auto& pool : pools)
    report.notes.push_back("split " + pool.label + ": " +
                           std::to_string(pool.countries.size()) + " countries");

  for (std::size_t wi = 0; wi < vc.w_grid.size(); ++wi) {
    const double w = vc.w_grid[wi];
    const CountrySide train_side =
        country_side(train_model, train_fit.sample, train_dist, w, vc, vc.seed, 100 + wi);

    // Training-versus-updated estimate tables (eligible countries only).
    std::vector<CountryEstimates> full_est, train_est;
    for (const auto& e : full_side.estimates)
      if (eligible.count(e.country)) full_est.push_back(e);
    for (const auto& e : train_side.estimates)
      if (eligible.count(e.country)) train_est.push_back(e);
    auto est_rows = estimate_errors(full_est, train_est, vc, w);
    report.estimates.insert(report.estimates.end(), est_rows.begin(), est_rows.end());

    PredictiveContext ctx;
    ctx.training_model = &train_model;
    ctx.sample = &train_fit.sample;
    ctx.births = inputs.births;
    ctx.by_country = train_side.predictive;

    // Per-observation predictive metrics, computed once per W.
    std::map<int, ObsMetrics> metrics;
    for (const auto& pool : pools) {
      for (const auto& list : pool.candidates) {
        for (int i : list) {
          if (metrics.count(i)) continue;
          const Observation& o = inputs.observations[static_cast<std::size_t>(i)];
          Rng rng(vc.seed, splitmix64(0xABCD + 7919ULL * static_cast<std::uint64_t>(i) +
                                      1000003ULL * wi));
          const PredictiveResult pred = predictive_leftout(ctx, o, rng);
          ObsMetrics m;
          m.err = o.u5mr - pred.median;
          m.rel = 100.0 * m.err / o.u5mr;
          m.score = interval_score(pred.lower90, pred.upper90, o.u5mr, vc.significance);
          m.side = o.u5mr < pred.lower90 ? -1 : (o.u5mr > pred.upper90 ? 1 : 0);
          metrics.emplace(i, m);
        }
      }
    }

    for (const auto& pool : pools) {
      LeftoutAggregate agg;
      agg.w = w;
      agg.split = pool.label;
      agg.n_countries = static_cast<int>(pool.countries.size());
      agg.n_sets = static_cast<int>(pool.sets.size());
      if (pool.sets.empty()) {
        report.leftout.push_back(std::move(agg));
        continue;
      }
      std::vector<double> me[2], mae[2], mre[2], mare[2], score[2], below, above;
      for (const auto& set : pool.sets) {
        std::vector<double> e, ae, rel, arel, sc;
        double n_below = 0.0, n_above = 0.0;
        for (int i : set) {
          const ObsMetrics& m = metrics.at(i);
          e.push_back(m.err);
          ae.push_back(std::abs(m.err));
          rel.push_back(m.rel);
          arel.push_back(std::abs(m.rel));
          sc.push_back(m.score);
          if (m.side < 0) n_below += 1.0;
          if (m.side > 0) n_above += 1.0;
        }
        auto mean_of = [](const std::vector<double>& v) {
          double s = 0.0;
          for (double x : v) s += x;
          return s / static_cast<double>(v.size());
        };
        me[0].push_back(stats::median(e));
        me[1].push_back(mean_of(e));
        mae[0].push_back(stats::median(ae));
        mae[1].push_back(mean_of(ae));
        mre[0].push_back(stats::median(rel));
        mre[1].push_back(mean_of(rel));
        mare[0].push_back(stats::median(arel));
        mare[1].push_back(mean_of(arel));
        score[0].push_back(stats::median(sc));
        score[1].push_back(mean_of(sc));
        below.push_back(100.0 * n_below / static_cast<double>(set.size()));
        above.push_back(100.0 * n_above / static_cast<double>(set.size()));
      }
      for (int variant = 0; variant < 2; ++variant) {
        agg.me[variant] = across_sets(me[variant]);
        agg.mae[variant] = across_sets(mae[variant]);
        agg.mre[variant] = across_sets(mre[variant]);
        agg.mare[variant] = across_sets(mare[variant]);
        agg.score[variant] = across_sets(score[variant]);
      }
      agg.pct_below = across_sets(below);
      agg.pct_above = across_sets(above);
      report.leftout.push_back(std::move(agg));
    }
  }
  return report;
}

}  // namespace b3
