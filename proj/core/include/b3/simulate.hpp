#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "b3/model.hpp"

namespace b3 {

/// One planned survey or census series for the generator.
struct SyntheticSeriesPlan {
  SourceType type = SourceType::mics_se;
  double collection_year = 2005.0;
  std::vector<double> ref_years;
  double reported_se = 0.05;  // written to the file for with-SE types
};

struct SyntheticCountryPlan {
  std::string code;
  bool has_vr = true;
  int vr_first = 1970;
  int vr_last = 2010;
  double vr_births = 2.0e5;
  bool vr_svr = false;
  bool vr_incomplete = false;   // incomplete registration: deaths scaled by theta
  double theta_true = 0.8;
  std::vector<SyntheticSeriesPlan> surveys;
  std::optional<double> lambda0_true;  // log level; drawn when absent
  std::optional<double> lambda1_true;  // per-knot slope; drawn when absent
};

struct SyntheticTruth {
  GlobalParams globals;
  std::vector<std::string> codes;
  std::vector<CountryParams> country;
  std::vector<CoefficientLayout> coeffs;
  std::vector<Eigen::VectorXd> alpha;  // observation-period coefficients
  std::map<std::string, SeriesParams> series;

  int country_index(const std::string& code) const;
  double psi(int country_idx, double t) const;  // true log U5MR
};

struct SyntheticData {
  std::vector<Observation> observations;
  SyntheticTruth truth;
};

/// Draw a complete dataset from the generative model: country trajectories
/// from the penalized-spline process, then observations through each source
/// type's error model (Poisson counts for VR, biased normal/t errors for
/// surveys). The model fitted to the output with the same interval and
/// projection settings is exactly well-specified.
SyntheticData simulate(const std::vector<SyntheticCountryPlan>& plans,
                       const GlobalParams& globals, double interval,
                       double projection_year, std::uint64_t seed);

/// A compact set of country plans for tests: `n` countries with one VR series,
/// one DHS-direct series, and one MICS-indirect series each.
std::vector<SyntheticCountryPlan> default_country_plans(int n, int first_year = 1975,
                                                        int last_year = 2010);

/// Hyperparameter truths matching default_country_plans.
GlobalParams default_truth_globals();

}  // namespace b3
