#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "b3/model.hpp"
#include "b3/project.hpp"
#include "b3/sampler.hpp"

namespace b3 {

struct ValidationConfig {
  double cutoff = 2006.0;  // training keeps data collected strictly before this
  int n_sets = 100;
  double significance = 0.1;  // x in the interval score
  double high_mortality_threshold = 40.0;  // U5MR in 1990
  std::uint64_t seed = 99;
  std::vector<double> w_grid = {0.5};
  double reference_w = 0.5;  // W used for the full-data reference estimates
  double arr_from = 1990.0;
  double arr_to = 2005.0;
  std::vector<double> estimate_years = {2000.0, 2005.0};

  void validate() const;  // throws ConfigError
};

struct SplitResult {
  std::vector<int> training;
  std::vector<int> test;
};

/// Entire series whose collection date falls at or after the cutoff go to the
/// test side; VR points count as collected in their own reporting year.
SplitResult split_training(const std::vector<Observation>& observations, double cutoff);

/// Negatively oriented interval score on the log scale:
///   log(r/l) + (2/x) log(l/u) 1[u < l] + (2/x) log(u/r) 1[u > r].
double interval_score(double lower, double upper, double observed,
                      double significance = 0.1);

/// Same score with plain widths, for quantities that may be nonpositive (ARR).
double interval_score_raw(double lower, double upper, double observed,
                          double significance = 0.1);

struct CoverageResult {
  double inside = 0.0;  // fraction in the closed interval [l, r]
  double below = 0.0;
  double above = 0.0;
};

CoverageResult coverage(const std::vector<double>& observed,
                        const std::vector<std::pair<double, double>>& intervals);

/// n_sets index sets, each holding one uniformly chosen candidate per country
/// (candidates_by_country[i] must be nonempty).
std::vector<std::vector<int>> sample_validation_sets(
    const std::vector<std::vector<int>>& candidates_by_country, int n_sets,
    std::uint64_t seed);

/// Per-draw annual rate of reduction (percent per year) between two years.
std::vector<double> arr_draws(const Eigen::MatrixXd& alpha, const CoefficientLayout& coeffs,
                              double from_year, double to_year);

/// Everything needed to form predictive distributions for one country's
/// left-out observations.
struct CountryPredictive {
  const CoefficientLayout* coeffs = nullptr;
  Eigen::MatrixXd alpha;  // draws x p_eff, already projected
};

struct PredictiveContext {
  const Model* training_model = nullptr;
  const PosteriorSample* sample = nullptr;
  const BirthsTable* births = nullptr;
  std::map<std::string, CountryPredictive> by_country;
};

struct PredictiveResult {
  double median = 0.0;  // posterior median of the predictive, natural scale
  double lower90 = 0.0;
  double upper90 = 0.0;
};

/// Predictive distribution of one left-out observation under the training
/// posterior: trajectory draw plus an error draw from the observation's data
/// model branch; series parameters are reused when the series was (partly)
/// seen in training and drawn fresh from the hierarchy otherwise. Throws
/// DataError when the observation's source type was absent from training.
PredictiveResult predictive_leftout(const PredictiveContext& ctx, const Observation& obs,
                                    Rng& rng);

struct MeasureStat {
  double median_of_sets = 0.0;
  double sd_of_sets = 0.0;
};

/// Aggregated left-out measures for one (W, period split): index 0 holds the
/// median-within-set variant, index 1 the mean-within-set variant.
struct LeftoutAggregate {
  double w = 0.0;
  std::string split;
  int n_countries = 0;
  int n_sets = 0;
  MeasureStat me[2], mae[2], mre[2], mare[2], score[2];
  MeasureStat pct_below, pct_above;
};

/// Training-versus-full comparison for one (W, target) where target is a U5MR
/// year or the ARR window. Errors are relative (percent) for U5MR targets and
/// absolute (percentage points) for the ARR.
struct EstimateAggregate {
  double w = 0.0;
  std::string target;
  int n_countries = 0;
  double median_err = 0.0, median_abs_err = 0.0, median_score = 0.0;
  double mean_err = 0.0, mean_abs_err = 0.0, mean_score = 0.0;
  double pct_below = 0.0, pct_above = 0.0;
};

struct CountryEstimates {
  std::string country;
  std::vector<double> years;
  std::vector<double> median, lower90, upper90;  // natural scale
  double arr_median = 0.0, arr_lower90 = 0.0, arr_upper90 = 0.0;
  double u5mr_1990 = 0.0;
};

/// The full-vs-training error tables (relative errors, coverage of the
/// training intervals against the updated medians, interval scores).
std::vector<EstimateAggregate> estimate_errors(
    const std::vector<CountryEstimates>& full, const std::vector<CountryEstimates>& training,
    const ValidationConfig& cfg, double w);

struct ValidationReport {
  std::vector<LeftoutAggregate> leftout;
  std::vector<EstimateAggregate> estimates;
  std::vector<std::string> notes;
};

struct ValidationRunInputs {
  std::vector<Observation> observations;
  ModelConfig model_config;
  SamplerConfig sampler_config;
  ValidationConfig config;
  const BirthsTable* births = nullptr;
};

/// The out-of-sample protocol end to end: split at the cutoff, fit training
/// and full models, score left-out observations over the resampled sets, and
/// compare training against updated estimates, per pooling weight.
ValidationReport run_validation(const ValidationRunInputs& inputs);

}  // namespace b3
