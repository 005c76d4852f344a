#include "b3/model.hpp"

#include <algorithm>
#include <cmath>
#include <set>

#include "b3/errors.hpp"
#include "b3/stats.hpp"

namespace b3 {

BoundConstraint realize_bound(const BoundSpec& spec, double sampled_lower) {
  BoundConstraint c;
  c.country = spec.country;
  c.year = spec.year;
  c.lower = sampled_lower;
  if (spec.min_completeness) c.upper = sampled_lower - std::log(*spec.min_completeness);
  return c;
}

bool bound_indicator(const std::vector<double>& log_u5mr_at_years,
                     const std::vector<BoundConstraint>& constraints) {
  for (std::size_t i = 0; i < constraints.size(); ++i) {
    const double psi = log_u5mr_at_years[i];
    if (!(psi > constraints[i].lower)) return false;
    if (constraints[i].upper && !(psi < *constraints[i].upper)) return false;
  }
  return true;
}

double row_loglik(const ModelRow& row, double psi, const RowParams& params) {
  const double r = row.y - psi;
  switch (row.role) {
    case ObsRole::vr_complete:
      return stats::log_normal_pdf(r, 0.0, row.v);
    case ObsRole::vr_trend:
      return stats::log_normal_pdf(r, params.log_theta, row.v);
    case ObsRole::bias_normal:
      return stats::log_normal_pdf(r, params.phi, obs_scale(params.omega, row.v));
    case ObsRole::bias_t:
      return stats::log_t_pdf(r, params.nu, params.phi, obs_scale(params.omega, row.v));
    case ObsRole::vr_bound:
    case ObsRole::vr_excluded:
      throw std::logic_error("row_loglik called on a non-density row");
  }
  return 0.0;
}

ModelConfig parse_model_config(const Config& cfg) {
  ModelConfig mc;
  mc.interval = cfg.number_or("model.interval", mc.interval);
  mc.projection_year = cfg.number_or("model.projection_year", 0.0);
  mc.chi_prior_location = cfg.number_or("priors.chi_location", mc.chi_prior_location);
  mc.chi_prior_scale = cfg.number_or("priors.chi_scale", mc.chi_prior_scale);
  mc.chi_prior_scale_is_variance =
      cfg.boolean_or("priors.chi_scale_is_variance", mc.chi_prior_scale_is_variance);
  mc.dhs_mu0_prior_mean = cfg.number_or("priors.dhs_mu0_mean", mc.dhs_mu0_prior_mean);
  mc.dhs_mu0_prior_sd = cfg.number_or("priors.dhs_mu0_sd", mc.dhs_mu0_prior_sd);
  mc.mu0_prior_sd = cfg.number_or("priors.mu0_sd", mc.mu0_prior_sd);
  mc.mu1_prior_sd = cfg.number_or("priors.mu1_sd", mc.mu1_prior_sd);
  mc.vr_sd_floor = cfg.number_or("model.vr_sd_floor", mc.vr_sd_floor);
  mc.svr_default_sd = cfg.number_or("model.svr_default_sd", mc.svr_default_sd);
  mc.census_default_se = cfg.number_or("model.census_default_se", mc.census_default_se);
  mc.survey_default_se = cfg.number_or("model.survey_default_se", mc.survey_default_se);
  if (cfg.has("model.fixed_sigma")) mc.fixed_sigma = cfg.number("model.fixed_sigma");

  for (const std::string& code : cfg.keys_under("incomplete_vr")) {
    IncompleteVrCountry c;
    c.country = code;
    const std::string base = "incomplete_vr." + code + ".";
    if (cfg.has(base + "m")) c.min_completeness = cfg.number(base + "m");
    c.bound_from = cfg.number_or(base + "bound_from", c.bound_from);
    c.use_bounds = cfg.boolean_or(base + "bounds", c.use_bounds);
    mc.incomplete_vr.countries.push_back(std::move(c));
  }
  for (const std::string& code : cfg.keys_under("conflict")) {
    mc.conflict_periods[code] = cfg.number_pairs("conflict." + code + ".periods");
  }
  return mc;
}

double resolve_sampling_sd(const Observation& obs, const ModelConfig& cfg,
                           const BirthsTable* births_table) {
  if (obs.reported_se) {
    if (!(*obs.reported_se > 0.0))
      throw DataError("nonpositive reported SE for series " + obs.series_id);
    return *obs.reported_se;
  }
  if (obs.source_type == SourceType::vr) {
    std::optional<double> births = obs.births;
    if (!births && births_table) births = births_table->lookup(obs.country, obs.ref_year);
    return vr_stochastic_sd(births, obs.u5mr, obs.svr, cfg.vr_sd_floor, cfg.svr_default_sd);
  }
  return obs.source_type == SourceType::census_indirect ? cfg.census_default_se
                                                        : cfg.survey_default_se;
}

namespace {

std::string bracket(const std::string& base, const std::string& id) {
  return base + "[" + id + "]";
}

}  // namespace

int ParamLayout::find(const std::string& name) const {
  for (std::size_t i = 0; i < entries_.size(); ++i)
    if (entries_[i].name == name) return static_cast<int>(i);
  return -1;
}

Model Model::build(std::vector<Observation> observations, const ModelConfig& cfg,
                   const BirthsTable* births_table) {
  if (!(cfg.projection_year > 0.0))
    throw ConfigError("model config: projection_year must be set");
  Model model;
  model.observations_ = std::move(observations);
  model.config_ = cfg;

  if (model.observations_.empty()) throw DataError("no observations to model");

  // Countries in sorted order for a deterministic layout.
  std::map<std::string, std::vector<int>> by_country;
  for (std::size_t i = 0; i < model.observations_.size(); ++i)
    by_country[model.observations_[i].country].push_back(static_cast<int>(i));

  std::map<std::string, int> series_lookup;
  std::set<int> repeated_set, nonrepeated_set, subtype_set;

  for (auto& [code, rows] : by_country) {
    CountryModel cm;
    cm.code = code;

    double first = std::numeric_limits<double>::infinity();
    double last = -std::numeric_limits<double>::infinity();
    for (int idx : rows) {
      first = std::min(first, model.observations_[static_cast<std::size_t>(idx)].ref_year);
      last = std::max(last, model.observations_[static_cast<std::size_t>(idx)].ref_year);
    }
    SplineBasis basis;
    try {
      basis = make_basis(first, last, std::max(cfg.projection_year, last), cfg.interval);
    } catch (const std::invalid_argument& e) {
      throw DataError("country " + code + ": " + e.what());
    }
    SplineMerge merge = identity_merge(basis.n_obs);
    const auto conflict = cfg.conflict_periods.find(code);
    if (conflict != cfg.conflict_periods.end()) {
      try {
        merge = merge_conflict_splines(basis, conflict->second);
      } catch (const std::invalid_argument& e) {
        throw ConfigError("conflict periods for " + code + ": " + e.what());
      }
    }
    cm.coeffs = CoefficientLayout(std::move(basis), std::move(merge));

    // Incomplete-VR selection, when the country is flagged.
    const IncompleteVrCountry* ivr = cfg.incomplete_vr.find(code);
    std::set<int> trend_set, bound_set;
    if (ivr) {
      bool no_trend = false;
      cm.selection = select_incomplete_vr(model.observations_, rows, *ivr, &no_trend);
      if (no_trend)
        model.warnings_.push_back("country " + code +
                                  ": flagged incomplete-VR but no VR data in 1990-1995");
      trend_set.insert(cm.selection.trend_obs.begin(), cm.selection.trend_obs.end());
      for (std::size_t b = 0; b < cm.selection.bound_obs.size(); ++b)
        bound_set.insert(cm.selection.bound_obs[b]);
    }

    for (int idx : rows) {
      const Observation& obs = model.observations_[static_cast<std::size_t>(idx)];
      ModelRow row;
      row.obs = idx;
      row.y = obs.log_u5mr;
      row.t = obs.ref_year;
      row.group = static_cast<int>(group_of(obs.source_type));

      if (obs.source_type == SourceType::vr) {
        if (obs.vr_status == VrStatus::incomplete) {
          if (trend_set.count(idx)) {
            row.role = ObsRole::vr_trend;
            row.v = resolve_sampling_sd(obs, cfg, births_table);
            cm.has_theta = true;
          } else if (bound_set.count(idx)) {
            BoundSpec spec;
            spec.country = code;
            spec.year = obs.ref_year;
            spec.y = obs.log_u5mr;
            spec.v = resolve_sampling_sd(obs, cfg, births_table);
            for (std::size_t b = 0; b < cm.selection.bound_obs.size(); ++b) {
              if (cm.selection.bound_obs[b] == idx) {
                spec.min_completeness = cm.selection.min_completeness[b];
                if (spec.min_completeness && !(*spec.min_completeness < 1.0))
                  throw ConfigError("country " + code +
                                    ": min completeness of 1 leaves an empty bound interval");
              }
            }
            cm.bounds.push_back(std::move(spec));
            continue;  // no density row
          } else {
            continue;  // excluded
          }
        } else {
          row.role = ObsRole::vr_complete;
          row.v = resolve_sampling_sd(obs, cfg, births_table);
        }
      } else {
        const SourceGroup group = group_of(obs.source_type);
        row.v = resolve_sampling_sd(obs, cfg, births_table);
        row.subtype = static_cast<int>(obs.source_type);
        subtype_set.insert(row.subtype);
        row.role = normal_error_group(group) ? ObsRole::bias_normal : ObsRole::bias_t;
        if (row.role == ObsRole::bias_t) model.has_t_rows_ = true;
        if (repeated_group(group)) {
          const auto z = obs.retrospective_period();
          if (!z)
            throw DataError("series " + obs.series_id +
                            ": repeated-source observation without survey_year");
          row.zc = *z - cfg.retrospective_center;
          repeated_set.insert(row.group);
          auto it = series_lookup.find(obs.series_id);
          if (it == series_lookup.end()) {
            ModelSeries ms;
            ms.id = obs.series_id;
            ms.group = row.group;
            ms.subtype = row.subtype;
            it = series_lookup.emplace(obs.series_id,
                                       static_cast<int>(model.series_.size())).first;
            model.series_.push_back(std::move(ms));
          }
          row.series = it->second;
        } else {
          nonrepeated_set.insert(row.group);
        }
      }
      cm.rows.push_back(std::move(row));
    }
    model.countries_.push_back(std::move(cm));
  }

  // Basis weights at row and bound times.
  for (auto& cm : model.countries_) {
    const int q = cm.coeffs.q_eff();
    const auto fill = [&](const std::vector<double>& times, Eigen::MatrixXd& mmat,
                          Eigen::VectorXd& gvec) {
      const auto n = static_cast<Eigen::Index>(times.size());
      mmat.resize(n, q);
      gvec.resize(n);
      for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd w = cm.coeffs.weight_row(times[static_cast<std::size_t>(i)]);
        const auto head = w.head(cm.coeffs.k_eff());
        mmat.row(i) = head.transpose() * cm.coeffs.diff_pinv_eff();
        gvec(i) = head.dot(cm.coeffs.centered_position());
      }
    };
    std::vector<double> row_times, bound_times;
    for (const ModelRow& r : cm.rows) row_times.push_back(r.t);
    for (const BoundSpec& b : cm.bounds) bound_times.push_back(b.year);
    fill(row_times, cm.m, cm.g);
    fill(bound_times, cm.bound_m, cm.bound_g);
  }

  // Series rows (country, row index) for the sampler's bookkeeping.
  for (std::size_t c = 0; c < model.countries_.size(); ++c) {
    const auto& cm = model.countries_[c];
    for (std::size_t r = 0; r < cm.rows.size(); ++r) {
      const int s = cm.rows[r].series;
      if (s >= 0)
        model.series_[static_cast<std::size_t>(s)].rows.emplace_back(
            static_cast<int>(c), static_cast<int>(r));
    }
  }

  model.repeated_groups_.assign(repeated_set.begin(), repeated_set.end());
  model.nonrepeated_groups_.assign(nonrepeated_set.begin(), nonrepeated_set.end());
  model.subtypes_.assign(subtype_set.begin(), subtype_set.end());

  model.build_layout();
  return model;
}

void Model::build_layout() {
  ParamLayout& l = layout_;
  l.mu0_.fill(-1);
  l.phi0_.fill(-1);
  l.mu1_.fill(-1);
  l.phi1_.fill(-1);
  l.omega_.fill(-1);

  const double inf = std::numeric_limits<double>::infinity();
  auto add = [&](ParamLayout::Kind kind, std::string name, double lo, double hi,
                 bool global) {
    ParamLayout::Entry e;
    e.kind = kind;
    e.name = std::move(name);
    e.lo = lo;
    e.hi = hi;
    e.global = global;
    l.entries_.push_back(std::move(e));
    return static_cast<int>(l.entries_.size() - 1);
  };

  for (std::size_t c = 0; c < countries_.size(); ++c) {
    const auto& cm = countries_[c];
    const int ci = static_cast<int>(c);
    int id = add(ParamLayout::Kind::lambda0, bracket("lambda0", cm.code),
                 std::log(config_.level_lo), std::log(config_.level_hi), false);
    l.entries_.back().country = ci;
    l.lambda0_.push_back(id);
    id = add(ParamLayout::Kind::lambda1, bracket("lambda1", cm.code),
             config_.decline_lo * config_.interval, config_.decline_hi * config_.interval,
             false);
    l.entries_.back().country = ci;
    l.lambda1_.push_back(id);

    l.eps_start_.push_back(static_cast<int>(l.entries_.size()));
    l.eps_count_.push_back(cm.coeffs.q_eff());
    for (int q = 0; q < cm.coeffs.q_eff(); ++q) {
      id = add(ParamLayout::Kind::eps,
               bracket("eps", cm.code) + "[" + std::to_string(q) + "]", -inf, inf, false);
      l.entries_.back().country = ci;
      l.entries_.back().index = q;
    }

    id = add(ParamLayout::Kind::log_sigma, bracket("log_sigma", cm.code), -inf, inf, false);
    l.entries_.back().country = ci;
    l.log_sigma_.push_back(id);

    if (cm.has_theta) {
      id = add(ParamLayout::Kind::theta, bracket("theta_vr", cm.code), 0.0, 1.0, false);
      l.entries_.back().country = ci;
      l.theta_.push_back(id);
    } else {
      l.theta_.push_back(-1);
    }
  }

  for (std::size_t s = 0; s < series_.size(); ++s) {
    int id = add(ParamLayout::Kind::beta0, bracket("beta0", series_[s].id), -inf, inf, false);
    l.entries_.back().series = static_cast<int>(s);
    l.beta0_.push_back(id);
    id = add(ParamLayout::Kind::beta1, bracket("beta1", series_[s].id), -inf, inf, false);
    l.entries_.back().series = static_cast<int>(s);
    l.beta1_.push_back(id);
  }

  l.chi_ = add(ParamLayout::Kind::chi, "chi", -inf, inf, true);
  l.phi_sigma_ = add(ParamLayout::Kind::phi_sigma, "phi_sigma", 0.0, config_.phi_hi, true);

  auto add_group = [&](ParamLayout::Kind kind, const char* base, int group, double lo,
                       double hi) {
    const int id = add(kind, bracket(base, to_label(static_cast<SourceGroup>(group))), lo,
                       hi, true);
    l.entries_.back().group = group;
    return id;
  };
  std::vector<int> mu0_groups = repeated_groups_;
  for (int g : nonrepeated_groups_) mu0_groups.push_back(g);
  std::sort(mu0_groups.begin(), mu0_groups.end());
  for (int g : mu0_groups)
    l.mu0_[static_cast<std::size_t>(g)] = add_group(ParamLayout::Kind::mu0, "mu0", g, -inf, inf);
  for (int g : repeated_groups_) {
    l.phi0_[static_cast<std::size_t>(g)] =
        add_group(ParamLayout::Kind::phi0, "phi0", g, 0.0, config_.phi_hi);
    l.mu1_[static_cast<std::size_t>(g)] =
        add_group(ParamLayout::Kind::mu1, "mu1", g, -inf, inf);
    l.phi1_[static_cast<std::size_t>(g)] =
        add_group(ParamLayout::Kind::phi1, "phi1", g, 0.0, config_.phi_hi);
  }
  for (int st : subtypes_) {
    const int id = add(ParamLayout::Kind::omega,
                       bracket("omega", to_label(static_cast<SourceType>(st))), 0.0,
                       config_.omega_hi, true);
    l.entries_.back().subtype = st;
    l.omega_[static_cast<std::size_t>(st)] = id;
  }
  if (has_t_rows_)
    l.nu_ = add(ParamLayout::Kind::nu, "nu", config_.nu_lo, config_.nu_hi, true);
}

double Model::chi_prior_sd() const {
  return config_.chi_prior_scale_is_variance ? std::sqrt(config_.chi_prior_scale)
                                             : config_.chi_prior_scale;
}

double Model::sigma_of(int c, const Eigen::VectorXd& state) const {
  if (config_.fixed_sigma) return *config_.fixed_sigma;
  return std::exp(state(layout_.log_sigma(c)));
}

double Model::log_prior(const Eigen::VectorXd& state) const {
  const double neg_inf = -std::numeric_limits<double>::infinity();
  // Support box first: anything outside is impossible.
  for (int i = 0; i < layout_.size(); ++i) {
    const auto& e = layout_.entries()[static_cast<std::size_t>(i)];
    if (!(state(i) > e.lo && state(i) < e.hi)) return neg_inf;
  }

  double lp = 0.0;
  const double chi_sd = chi_prior_sd();
  const double chi = state(layout_.chi());
  const double phi_sigma = state(layout_.phi_sigma());
  lp += stats::log_normal_pdf(chi, config_.chi_prior_location, chi_sd);

  for (std::size_t c = 0; c < countries_.size(); ++c) {
    const int ci = static_cast<int>(c);
    // exp(lambda0) is uniform on the level scale, hence the Jacobian term.
    lp += state(layout_.lambda0(ci));
    const double sigma = sigma_of(ci, state);
    if (!config_.fixed_sigma)
      lp += stats::log_normal_pdf(state(layout_.log_sigma(ci)), chi, phi_sigma);
    for (int q = 0; q < layout_.eps_count(ci); ++q)
      lp += stats::log_normal_pdf(state(layout_.eps(ci, q)), 0.0, sigma);
    // theta and lambda1 are flat within their supports.
  }

  for (std::size_t s = 0; s < series_.size(); ++s) {
    const int si = static_cast<int>(s);
    const int g = series_[s].group;
    lp += stats::log_normal_pdf(state(layout_.beta0(si)), state(layout_.mu0(g)),
                                state(layout_.phi0(g)));
    lp += stats::log_normal_pdf(state(layout_.beta1(si)), state(layout_.mu1(g)),
                                state(layout_.phi1(g)));
  }

  for (int g = 0; g < kSourceGroupCount; ++g) {
    if (layout_.mu0(g) >= 0) {
      const bool dhs = static_cast<SourceGroup>(g) == SourceGroup::dhs_direct;
      lp += stats::log_normal_pdf(state(layout_.mu0(g)),
                                  dhs ? config_.dhs_mu0_prior_mean : 0.0,
                                  dhs ? config_.dhs_mu0_prior_sd : config_.mu0_prior_sd);
    }
    if (layout_.mu1(g) >= 0)
      lp += stats::log_normal_pdf(state(layout_.mu1(g)), 0.0, config_.mu1_prior_sd);
  }
  // phi_sigma, phi0, phi1, omega, nu, theta, lambda1: uniform within support.
  return lp;
}

RowParams Model::row_params(const ModelRow& row, const Eigen::VectorXd& state) const {
  RowParams p;
  if (row.role == ObsRole::bias_normal || row.role == ObsRole::bias_t) {
    p.omega = state(layout_.omega(row.subtype));
    if (row.series >= 0) {
      p.phi = state(layout_.beta0(row.series)) + state(layout_.beta1(row.series)) * row.zc;
    } else {
      p.phi = state(layout_.mu0(row.group));
    }
    if (row.role == ObsRole::bias_t) p.nu = state(layout_.nu());
  }
  return p;
}

Eigen::VectorXd Model::psi_rows(int country, const Eigen::VectorXd& state) const {
  const auto& cm = countries_[static_cast<std::size_t>(country)];
  const double lambda0 = state(layout_.lambda0(country));
  const double lambda1 = state(layout_.lambda1(country));
  Eigen::VectorXd eps(cm.coeffs.q_eff());
  for (int q = 0; q < cm.coeffs.q_eff(); ++q) eps(q) = state(layout_.eps(country, q));
  return Eigen::VectorXd::Constant(cm.m.rows(), lambda0) + lambda1 * cm.g + cm.m * eps;
}

Eigen::VectorXd Model::psi_bounds(int country, const Eigen::VectorXd& state) const {
  const auto& cm = countries_[static_cast<std::size_t>(country)];
  const double lambda0 = state(layout_.lambda0(country));
  const double lambda1 = state(layout_.lambda1(country));
  Eigen::VectorXd eps(cm.coeffs.q_eff());
  for (int q = 0; q < cm.coeffs.q_eff(); ++q) eps(q) = state(layout_.eps(country, q));
  return Eigen::VectorXd::Constant(cm.bound_m.rows(), lambda0) + lambda1 * cm.bound_g +
         cm.bound_m * eps;
}

double Model::log_likelihood(const Eigen::VectorXd& state) const {
  double ll = 0.0;
  for (std::size_t c = 0; c < countries_.size(); ++c) {
    const auto& cm = countries_[c];
    const Eigen::VectorXd psi = psi_rows(static_cast<int>(c), state);
    for (std::size_t r = 0; r < cm.rows.size(); ++r) {
      const ModelRow& row = cm.rows[r];
      RowParams p = row_params(row, state);
      if (row.role == ObsRole::vr_trend)
        p.log_theta = std::log(state(layout_.theta(static_cast<int>(c))));
      ll += row_loglik(row, psi(static_cast<Eigen::Index>(r)), p);
    }
  }
  return ll;
}

GlobalParams Model::globals_from_state(const Eigen::VectorXd& state) const {
  GlobalParams g;
  g.chi = state(layout_.chi());
  g.phi_sigma = state(layout_.phi_sigma());
  if (layout_.nu() >= 0) g.nu = state(layout_.nu());
  for (int i = 0; i < kSourceGroupCount; ++i) {
    if (layout_.mu0(i) >= 0) g.mu0[static_cast<std::size_t>(i)] = state(layout_.mu0(i));
    if (layout_.phi0(i) >= 0) g.phi0[static_cast<std::size_t>(i)] = state(layout_.phi0(i));
    if (layout_.mu1(i) >= 0) g.mu1[static_cast<std::size_t>(i)] = state(layout_.mu1(i));
    if (layout_.phi1(i) >= 0) g.phi1[static_cast<std::size_t>(i)] = state(layout_.phi1(i));
  }
  for (int i = 0; i < kSourceTypeCount; ++i)
    if (layout_.omega(i) >= 0) g.omega[static_cast<std::size_t>(i)] = state(layout_.omega(i));
  return g;
}

void Model::set_globals_in_state(const GlobalParams& globals, Eigen::VectorXd& state) const {
  auto put = [&](int idx, double value, const char* what) {
    if (idx < 0) return;
    if (std::isnan(value))
      throw ConfigError(std::string("missing fixed hyperparameter: ") + what);
    state(idx) = value;
  };
  put(layout_.chi(), globals.chi, "chi");
  put(layout_.phi_sigma(), globals.phi_sigma, "phi_sigma");
  put(layout_.nu(), globals.nu, "nu");
  for (int i = 0; i < kSourceGroupCount; ++i) {
    const char* label = to_label(static_cast<SourceGroup>(i));
    put(layout_.mu0(i), globals.mu0[static_cast<std::size_t>(i)], label);
    put(layout_.phi0(i), globals.phi0[static_cast<std::size_t>(i)], label);
    put(layout_.mu1(i), globals.mu1[static_cast<std::size_t>(i)], label);
    put(layout_.phi1(i), globals.phi1[static_cast<std::size_t>(i)], label);
  }
  for (int i = 0; i < kSourceTypeCount; ++i)
    put(layout_.omega(i), globals.omega[static_cast<std::size_t>(i)],
        to_label(static_cast<SourceType>(i)));
}

CountryParams Model::country_from_state(int c, const Eigen::VectorXd& state) const {
  CountryParams p;
  p.lambda0 = state(layout_.lambda0(c));
  p.lambda1 = state(layout_.lambda1(c));
  p.eps.resize(layout_.eps_count(c));
  for (int q = 0; q < layout_.eps_count(c); ++q) p.eps(q) = state(layout_.eps(c, q));
  p.sigma = sigma_of(c, state);
  if (layout_.theta(c) >= 0) p.theta_vr = state(layout_.theta(c));
  return p;
}

SeriesParams Model::series_from_state(int s, const Eigen::VectorXd& state) const {
  SeriesParams p;
  p.beta0 = state(layout_.beta0(s));
  p.beta1 = state(layout_.beta1(s));
  return p;
}

}  // namespace b3
