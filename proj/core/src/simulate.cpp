#include "b3/simulate.hpp"

#include <algorithm>
#include <cmath>

#include "b3/errors.hpp"
#include "b3/rng.hpp"
#include "b3/stats.hpp"

namespace b3 {

int SyntheticTruth::country_index(const std::string& code) const {
  for (std::size_t i = 0; i < codes.size(); ++i)
    if (codes[i] == code) return static_cast<int>(i);
  return -1;
}

double SyntheticTruth::psi(int country_idx, double t) const {
  const auto& layout = coeffs[static_cast<std::size_t>(country_idx)];
  std::array<int, 4> cols;
  std::array<double, 4> w;
  int count;
  layout.weights_at(t, cols, w, count);
  double value = 0.0;
  const auto& a = alpha[static_cast<std::size_t>(country_idx)];
  for (int c = 0; c < count; ++c) {
    if (cols[static_cast<std::size_t>(c)] >= a.size())
      throw std::out_of_range("SyntheticTruth::psi beyond the generated coefficients");
    value += w[static_cast<std::size_t>(c)] * a(cols[static_cast<std::size_t>(c)]);
  }
  return value;
}

SyntheticData simulate(const std::vector<SyntheticCountryPlan>& plans,
                       const GlobalParams& globals, double interval,
                       double projection_year, std::uint64_t seed) {
  SyntheticData data;
  data.truth.globals = globals;
  Rng rng(seed, 0x51D);

  for (const auto& plan : plans) {
    double first = std::numeric_limits<double>::infinity();
    double last = -std::numeric_limits<double>::infinity();
    if (plan.has_vr) {
      first = std::min(first, plan.vr_first + 0.5);
      last = std::max(last, plan.vr_last + 0.5);
    }
    for (const auto& s : plan.surveys) {
      for (double ref : s.ref_years) {
        first = std::min(first, ref);
        last = std::max(last, ref);
      }
    }
    if (!std::isfinite(first) || !std::isfinite(last))
      throw DataError("simulate: country plan without observations: " + plan.code);

    SplineBasis basis = make_basis(first, last, std::max(projection_year, last), interval);
    CoefficientLayout coeffs(basis, identity_merge(basis.n_obs));

    CountryParams truth;
    truth.sigma = std::exp(globals.chi + globals.phi_sigma * rng.normal());
    truth.lambda0 =
        plan.lambda0_true ? *plan.lambda0_true : rng.uniform(std::log(30.0), std::log(150.0));
    truth.lambda1 =
        plan.lambda1_true ? *plan.lambda1_true : rng.uniform(-0.055, -0.01) * interval;
    truth.eps.resize(coeffs.q_eff());
    for (int q = 0; q < coeffs.q_eff(); ++q)
      truth.eps(q) = truth.sigma * rng.normal();
    if (plan.vr_incomplete) truth.theta_vr = plan.theta_true;

    const Eigen::VectorXd alpha =
        coeffs.alpha_eff(truth.lambda0, truth.lambda1, truth.eps);
    const int country_idx = static_cast<int>(data.truth.codes.size());
    data.truth.codes.push_back(plan.code);
    data.truth.country.push_back(truth);
    data.truth.coeffs.push_back(coeffs);
    data.truth.alpha.push_back(alpha);

    auto psi_at = [&](double t) { return data.truth.psi(country_idx, t); };

    if (plan.has_vr) {
      const std::string series_id = plan.code + "-vr";
      for (int year = plan.vr_first; year <= plan.vr_last; ++year) {
        const double t = year + 0.5;
        const double rate = std::exp(psi_at(t));
        const double effective_rate =
            plan.vr_incomplete ? rate * plan.theta_true : rate;
        double deaths = 0.0;
        do {
          deaths = stats::poisson(rng, plan.vr_births * effective_rate / 1000.0);
        } while (deaths <= 0.0);
        Observation obs;
        obs.country = plan.code;
        obs.ref_year = t;
        obs.u5mr = 1000.0 * deaths / plan.vr_births;
        obs.log_u5mr = std::log(obs.u5mr);
        obs.series_id = series_id;
        obs.source_type = SourceType::vr;
        obs.vr_status = plan.vr_incomplete ? VrStatus::incomplete : VrStatus::complete;
        obs.svr = plan.vr_svr;
        obs.births = plan.vr_births;
        obs.deaths = deaths;
        data.observations.push_back(std::move(obs));
      }
    }

    int survey_counter = 0;
    for (const auto& s : plan.surveys) {
      const std::string series_id =
          plan.code + "-" + to_label(s.type) + "-" + std::to_string(survey_counter++);
      const SourceGroup group = group_of(s.type);
      SeriesParams sp;
      sp.beta0 =
          globals.mu0_of(group) + globals.phi0[static_cast<std::size_t>(group)] * rng.normal();
      sp.beta1 = globals.mu1[static_cast<std::size_t>(group)] +
                 globals.phi1[static_cast<std::size_t>(group)] * rng.normal();
      data.truth.series[series_id] = sp;

      for (double ref : s.ref_years) {
        if (ref > s.collection_year)
          throw DataError("simulate: reference year after the collection year");
        const double z = s.collection_year - ref;
        const double v = reports_se(s.type)
                             ? s.reported_se
                             : (s.type == SourceType::census_indirect ? 0.025 : 0.1);
        const double scale = obs_scale(globals.omega_of(s.type), v);
        const double phi = bias_mean(sp, z);
        const double noise = normal_error_group(group)
                                 ? rng.normal()
                                 : rng.student_t(globals.nu);
        const double y = psi_at(ref) + phi + scale * noise;

        Observation obs;
        obs.country = plan.code;
        obs.ref_year = ref;
        obs.u5mr = std::exp(y);
        obs.log_u5mr = y;
        obs.series_id = series_id;
        obs.source_type = s.type;
        obs.survey_year = s.collection_year;
        if (reports_se(s.type)) obs.reported_se = v;
        data.observations.push_back(std::move(obs));
      }
    }
  }
  return data;
}

std::vector<SyntheticCountryPlan> default_country_plans(int n, int first_year,
                                                        int last_year) {
  std::vector<SyntheticCountryPlan> plans;
  plans.reserve(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    SyntheticCountryPlan p;
    char code[8];
    std::snprintf(code, sizeof(code), "C%02d", i);
    p.code = code;
    p.vr_first = first_year;
    p.vr_last = last_year;
    p.vr_births = 1.5e5;

    SyntheticSeriesPlan dhs;
    dhs.type = SourceType::dhs_direct_se;
    dhs.collection_year = last_year - 3.0;
    for (int k = 0; k < 10; ++k) dhs.ref_years.push_back(dhs.collection_year - 2.0 * k - 0.5);
    dhs.reported_se = 0.05;
    p.surveys.push_back(dhs);

    SyntheticSeriesPlan mics;
    mics.type = SourceType::mics_se;
    mics.collection_year = last_year - 8.0;
    for (int k = 0; k < 8; ++k) mics.ref_years.push_back(mics.collection_year - 2.5 * k - 0.5);
    mics.reported_se = 0.06;
    p.surveys.push_back(mics);

    plans.push_back(std::move(p));
  }
  return plans;
}

GlobalParams default_truth_globals() {
  GlobalParams g;
  g.chi = -3.0;
  g.phi_sigma = 0.3;
  g.nu = 10.0;
  auto set_group = [&](SourceGroup grp, double mu0, double phi0, double mu1, double phi1) {
    g.mu0[static_cast<std::size_t>(grp)] = mu0;
    g.phi0[static_cast<std::size_t>(grp)] = phi0;
    g.mu1[static_cast<std::size_t>(grp)] = mu1;
    g.phi1[static_cast<std::size_t>(grp)] = phi1;
  };
  set_group(SourceGroup::dhs_direct, -0.0123, 0.05, 0.0, 0.004);
  set_group(SourceGroup::mics_indirect, 0.10, 0.05, 0.0, 0.004);
  g.omega_of(SourceType::dhs_direct_se) = 0.05;
  g.omega_of(SourceType::mics_se) = 0.05;
  return g;
}

}  // namespace b3
