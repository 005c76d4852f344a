#pragma once

#include <Eigen/Dense>
#include <array>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "b3/basis.hpp"
#include "b3/config.hpp"
#include "b3/ingest.hpp"
#include "b3/observation.hpp"

namespace b3 {

/// Hyperparameters shared across countries (the starred parameters that get
/// frozen at their posterior medians in country-specific runs). Arrays are
/// indexed by enum ordinal; entries for absent categories stay NaN.
struct GlobalParams {
  double chi = -3.0;        // mean of log smoothing sd
  double phi_sigma = 1.0;   // sd of log smoothing sd
  double nu = 16.0;         // t degrees of freedom
  std::array<double, kSourceGroupCount> mu0;   // mean level bias by source type
  std::array<double, kSourceGroupCount> phi0;  // between-series sd of level bias
  std::array<double, kSourceGroupCount> mu1;   // mean slope bias
  std::array<double, kSourceGroupCount> phi1;  // between-series sd of slope bias
  std::array<double, kSourceTypeCount> omega;  // nonsampling sd by subtype

  GlobalParams() {
    mu0.fill(std::numeric_limits<double>::quiet_NaN());
    phi0.fill(std::numeric_limits<double>::quiet_NaN());
    mu1.fill(std::numeric_limits<double>::quiet_NaN());
    phi1.fill(std::numeric_limits<double>::quiet_NaN());
    omega.fill(std::numeric_limits<double>::quiet_NaN());
  }
  double& mu0_of(SourceGroup g) { return mu0[static_cast<std::size_t>(g)]; }
  double mu0_of(SourceGroup g) const { return mu0[static_cast<std::size_t>(g)]; }
  double& omega_of(SourceType t) { return omega[static_cast<std::size_t>(t)]; }
  double omega_of(SourceType t) const { return omega[static_cast<std::size_t>(t)]; }
};

struct CountryParams {
  double lambda0 = 0.0;
  double lambda1 = 0.0;
  Eigen::VectorXd eps;
  double sigma = 0.05;
  std::optional<double> theta_vr;  // incomplete-VR bias fraction, flagged countries
};

struct SeriesParams {
  double beta0 = 0.0;  // level bias of the series
  double beta1 = 0.0;  // slope bias per retrospective year
};

/// Mean bias of a repeated-source observation as a linear function of the
/// retrospective period, centered at ten years.
inline double bias_mean(const SeriesParams& series, double retrospective_years,
                        double center = 10.0) {
  return series.beta0 + series.beta1 * (retrospective_years - center);
}

/// Total error scale: nonsampling and sampling standard deviations combined.
inline double obs_scale(double omega, double v) { return std::sqrt(omega * omega + v * v); }

/// Underlying data for one minimum-U5MR constraint; the realized lower bound
/// is resampled around y every iteration.
struct BoundSpec {
  std::string country;
  double year = 0.0;
  double y = 0.0;  // log of the incomplete-VR observation
  double v = 0.0;  // its stochastic sd
  std::optional<double> min_completeness;  // m: adds the upper bound L - log(m)
};

/// One realized constraint: log(U5MR) at `year` must lie in (lower, upper).
struct BoundConstraint {
  std::string country;
  double year = 0.0;
  double lower = 0.0;
  std::optional<double> upper;
};

BoundConstraint realize_bound(const BoundSpec& spec, double sampled_lower);

/// True iff every constraint holds for the given log-scale trajectory values
/// (aligned with the constraints).
bool bound_indicator(const std::vector<double>& log_u5mr_at_years,
                     const std::vector<BoundConstraint>& constraints);

/// How an observation enters the posterior.
enum class ObsRole {
  vr_complete,  // normal, mean 0, sd v
  vr_trend,     // normal, mean log(theta_c), sd v
  vr_bound,     // enters through a BoundSpec, no density term
  vr_excluded,  // incomplete VR that informs nothing
  bias_normal,  // DHS-class: normal, mean Phi, sd Omega
  bias_t,       // other non-VR: t_nu, location Phi, scale Omega
};

/// Flattened per-observation record used in likelihood evaluations.
struct ModelRow {
  int obs = -1;       // index into Model::observations()
  double y = 0.0;     // log u5mr
  double t = 0.0;     // reference year
  double v = 0.0;     // sampling sd (reported, derived, or default)
  double zc = 0.0;    // centered retrospective period (z - 10)
  ObsRole role = ObsRole::vr_complete;
  int series = -1;    // model series index for repeated sources
  int subtype = -1;   // SourceType ordinal for non-VR rows
  int group = -1;     // SourceGroup ordinal
};

struct RowParams {
  double phi = 0.0;        // bias mean (ignored for VR roles)
  double omega = 0.0;      // nonsampling sd (ignored for VR roles)
  double log_theta = 0.0;  // only for vr_trend
  double nu = 30.0;        // only for bias_t
};

/// Log density of the row's error y - psi under its branch of the data model.
double row_loglik(const ModelRow& row, double psi, const RowParams& params);

struct ModelConfig {
  double interval = 2.5;
  double projection_year = 0.0;  // must be set by the caller

  // Priors. chi_prior_scale is a variance by default; flip the flag to read
  // it as an sd.
  double chi_prior_location = -3.0;
  double chi_prior_scale = 10.0;
  bool chi_prior_scale_is_variance = true;
  double level_lo = 1.0, level_hi = 1000.0;        // exp(lambda0)
  double decline_lo = -0.25, decline_hi = 0.2;     // lambda1 / I
  double phi_hi = 5.0;                             // phi_sigma, phi0, phi1
  double omega_hi = 0.5;
  double nu_lo = 2.0, nu_hi = 30.0;
  double dhs_mu0_prior_mean = -0.0123;
  double dhs_mu0_prior_sd = 0.00556;
  double mu0_prior_sd = 0.15;
  double mu1_prior_sd = 0.02;

  // Sampling-error defaults.
  double vr_sd_floor = 0.025;
  double svr_default_sd = 0.1;
  double census_default_se = 0.025;
  double survey_default_se = 0.1;
  double retrospective_center = 10.0;

  IncompleteVrConfig incomplete_vr;
  std::map<std::string, std::vector<std::pair<double, double>>> conflict_periods;

  /// Pins every country's smoothing sd (diagnostic/limit runs).
  std::optional<double> fixed_sigma;
};

/// Read the [model] / [priors] / [incomplete_vr] / [conflict] sections.
ModelConfig parse_model_config(const Config& cfg);

/// Sampling sd for any observation under the config's default rules.
double resolve_sampling_sd(const Observation& obs, const ModelConfig& cfg,
                           const BirthsTable* births_table);

struct CountryModel {
  std::string code;
  CoefficientLayout coeffs;
  std::vector<ModelRow> rows;
  Eigen::MatrixXd m;   // rows x q_eff: basis-times-reparam weights for eps
  Eigen::VectorXd g;   // rows: weights for lambda1
  std::vector<BoundSpec> bounds;
  Eigen::MatrixXd bound_m;  // bounds x q_eff
  Eigen::VectorXd bound_g;  // bounds
  bool has_theta = false;
  IncompleteVrSelection selection;  // indices into Model::observations()
};

struct ModelSeries {
  std::string id;
  int group = -1;    // SourceGroup ordinal
  int subtype = -1;  // SourceType ordinal
  std::vector<std::pair<int, int>> rows;  // (country index, row index)
};

/// Names, supports and offsets of every sampled quantity, in state order.
class ParamLayout {
 public:
  enum class Kind {
    lambda0, lambda1, eps, log_sigma, theta,
    beta0, beta1,
    chi, phi_sigma, mu0, phi0, mu1, phi1, omega, nu,
  };
  struct Entry {
    Kind kind;
    std::string name;
    int country = -1;
    int index = -1;    // eps component
    int series = -1;
    int group = -1;    // SourceGroup ordinal
    int subtype = -1;  // SourceType ordinal
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();
    bool global = false;
  };

  const std::vector<Entry>& entries() const { return entries_; }
  int size() const { return static_cast<int>(entries_.size()); }

  int lambda0(int c) const { return lambda0_[static_cast<std::size_t>(c)]; }
  int lambda1(int c) const { return lambda1_[static_cast<std::size_t>(c)]; }
  int eps(int c, int q) const { return eps_start_[static_cast<std::size_t>(c)] + q; }
  int eps_count(int c) const { return eps_count_[static_cast<std::size_t>(c)]; }
  int log_sigma(int c) const { return log_sigma_[static_cast<std::size_t>(c)]; }
  int theta(int c) const { return theta_[static_cast<std::size_t>(c)]; }
  int beta0(int s) const { return beta0_[static_cast<std::size_t>(s)]; }
  int beta1(int s) const { return beta1_[static_cast<std::size_t>(s)]; }
  int chi() const { return chi_; }
  int phi_sigma() const { return phi_sigma_; }
  int nu() const { return nu_; }
  int mu0(int group) const { return mu0_[static_cast<std::size_t>(group)]; }
  int phi0(int group) const { return phi0_[static_cast<std::size_t>(group)]; }
  int mu1(int group) const { return mu1_[static_cast<std::size_t>(group)]; }
  int phi1(int group) const { return phi1_[static_cast<std::size_t>(group)]; }
  int omega(int subtype) const { return omega_[static_cast<std::size_t>(subtype)]; }
  int find(const std::string& name) const;

 private:
  friend class Model;
  std::vector<Entry> entries_;
  std::vector<int> lambda0_, lambda1_, eps_start_, eps_count_, log_sigma_, theta_;
  std::vector<int> beta0_, beta1_;
  int chi_ = -1, phi_sigma_ = -1, nu_ = -1;
  std::array<int, kSourceGroupCount> mu0_, phi0_, mu1_, phi1_;
  std::array<int, kSourceTypeCount> omega_;
};

/// The assembled joint model for a set of countries.
class Model {
 public:
  static Model build(std::vector<Observation> observations, const ModelConfig& cfg,
                     const BirthsTable* births_table = nullptr);

  const std::vector<Observation>& observations() const { return observations_; }
  const std::vector<CountryModel>& countries() const { return countries_; }
  const std::vector<ModelSeries>& series() const { return series_; }
  const ModelConfig& config() const { return config_; }
  const ParamLayout& layout() const { return layout_; }
  const std::vector<std::string>& warnings() const { return warnings_; }

  /// SourceGroup ordinals with series-level bias parameters present.
  const std::vector<int>& repeated_groups() const { return repeated_groups_; }
  /// SourceGroup ordinals whose observations use mu0 directly.
  const std::vector<int>& nonrepeated_groups() const { return nonrepeated_groups_; }
  /// Non-VR SourceType ordinals present (one omega each).
  const std::vector<int>& subtypes() const { return subtypes_; }
  bool has_t_rows() const { return has_t_rows_; }

  double chi_prior_sd() const;

  /// Full log prior / log likelihood of a state vector (reference path; the
  /// sampler maintains these incrementally).
  double log_prior(const Eigen::VectorXd& state) const;
  double log_likelihood(const Eigen::VectorXd& state) const;

  /// Trajectory on the log scale at the country's row/bound times.
  Eigen::VectorXd psi_rows(int country, const Eigen::VectorXd& state) const;
  Eigen::VectorXd psi_bounds(int country, const Eigen::VectorXd& state) const;

  RowParams row_params(const ModelRow& row, const Eigen::VectorXd& state) const;

  GlobalParams globals_from_state(const Eigen::VectorXd& state) const;
  void set_globals_in_state(const GlobalParams& globals, Eigen::VectorXd& state) const;
  CountryParams country_from_state(int c, const Eigen::VectorXd& state) const;
  SeriesParams series_from_state(int s, const Eigen::VectorXd& state) const;
  double sigma_of(int c, const Eigen::VectorXd& state) const;

 private:
  std::vector<Observation> observations_;
  ModelConfig config_;
  std::vector<CountryModel> countries_;
  std::vector<ModelSeries> series_;
  std::vector<int> repeated_groups_, nonrepeated_groups_, subtypes_;
  bool has_t_rows_ = false;
  ParamLayout layout_;
  std::vector<std::string> warnings_;

  void build_layout();
};

}  // namespace b3
