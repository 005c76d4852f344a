#include "b3/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <thread>

#include "b3/errors.hpp"
#include "b3/rng.hpp"

namespace b3 {

void SamplerConfig::validate() const {
  if (n_chains < 1) throw ConfigError("sampler: n_chains must be >= 1");
  if (burn_in < 0 || burn_in >= n_iter)
    throw ConfigError("sampler: burn_in must lie in [0, n_iter)");
  if (thin < 1) throw ConfigError("sampler: thin must be >= 1");
  if (retained_per_chain() < 1) throw ConfigError("sampler: no draws would be retained");
  if (jobs < 1) throw ConfigError("sampler: jobs must be >= 1");
}

GelmanRubinResult gelman_rubin(const std::vector<std::vector<double>>& chains) {
  if (chains.size() < 2) throw std::invalid_argument("gelman_rubin needs >= 2 chains");
  std::size_t n = chains[0].size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 10) throw std::invalid_argument("gelman_rubin needs >= 10 draws per chain");

  const auto m = static_cast<double>(chains.size());
  const auto nd = static_cast<double>(n);
  double grand = 0.0;
  std::vector<double> means(chains.size());
  for (std::size_t j = 0; j < chains.size(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += chains[j][i];
    means[j] = s / nd;
    grand += means[j];
  }
  grand /= m;

  double b = 0.0;  // between-chain variance times n
  for (double mj : means) b += (mj - grand) * (mj - grand);
  b *= nd / (m - 1.0);

  double w = 0.0;  // mean within-chain variance
  for (std::size_t j = 0; j < chains.size(); ++j) {
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      ss += (chains[j][i] - means[j]) * (chains[j][i] - means[j]);
    w += ss / (nd - 1.0);
  }
  w /= m;

  GelmanRubinResult out;
  if (w <= 0.0) {
    out.degenerate = true;
    out.rhat = b <= 0.0 ? 1.0 : std::numeric_limits<double>::infinity();
    return out;
  }
  const double var_hat = (nd - 1.0) / nd * w + b / nd;
  out.rhat = std::sqrt(var_hat / w);
  return out;
}

double effective_sample_size(const std::vector<std::vector<double>>& chains) {
  if (chains.empty()) throw std::invalid_argument("effective_sample_size: no chains");
  std::size_t n = chains[0].size();
  for (const auto& c : chains) n = std::min(n, c.size());
  if (n < 4) return static_cast<double>(n * chains.size());

  const auto m = static_cast<double>(chains.size());
  const auto nd = static_cast<double>(n);
  std::vector<double> means(chains.size());
  double w = 0.0;
  for (std::size_t j = 0; j < chains.size(); ++j) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += chains[j][i];
    means[j] = s / nd;
    double ss = 0.0;
    for (std::size_t i = 0; i < n; ++i)
      ss += (chains[j][i] - means[j]) * (chains[j][i] - means[j]);
    w += ss / (nd - 1.0);
  }
  w /= m;
  if (w <= 0.0) return static_cast<double>(n * chains.size());

  double var_plus = (nd - 1.0) / nd * w;
  if (chains.size() > 1) {
    double grand = 0.0;
    for (double mj : means) grand += mj;
    grand /= m;
    double bn = 0.0;
    for (double mj : means) bn += (mj - grand) * (mj - grand);
    var_plus += bn / (m - 1.0);
  }

  auto acov = [&](std::size_t lag) {
    double total = 0.0;
    for (std::size_t j = 0; j < chains.size(); ++j) {
      double s = 0.0;
      for (std::size_t i = 0; i + lag < n; ++i)
        s += (chains[j][i] - means[j]) * (chains[j][i + lag] - means[j]);
      total += s / nd;
    }
    return total / m;
  };

  // Geyer initial monotone positive sequence over paired autocorrelations.
  double tau = 1.0;
  double prev_pair = std::numeric_limits<double>::infinity();
  for (std::size_t lag = 1; lag + 1 < n; lag += 2) {
    const double rho_a = 1.0 - (w - acov(lag)) / var_plus;
    const double rho_b = 1.0 - (w - acov(lag + 1)) / var_plus;
    double pair = rho_a + rho_b;
    if (pair < 0.0) break;
    pair = std::min(pair, prev_pair);
    prev_pair = pair;
    tau += 2.0 * pair;
  }
  const double total = nd * m;
  return std::clamp(total / tau, 1.0, total);
}

Eigen::VectorXd PosteriorSample::draw(long j) const {
  const long per = retained_per_chain();
  const int c = static_cast<int>(j / per);
  return chains_[static_cast<std::size_t>(c)].row(j % per).transpose();
}

std::vector<double> PosteriorSample::draws_of(int param) const {
  std::vector<double> out;
  out.reserve(static_cast<std::size_t>(total_draws()));
  for (const auto& c : chains_)
    for (Eigen::Index i = 0; i < c.rows(); ++i) out.push_back(c(i, param));
  return out;
}

std::vector<std::vector<double>> PosteriorSample::chains_of(int param) const {
  std::vector<std::vector<double>> out;
  out.reserve(chains_.size());
  for (const auto& c : chains_) {
    std::vector<double> v(static_cast<std::size_t>(c.rows()));
    for (Eigen::Index i = 0; i < c.rows(); ++i) v[static_cast<std::size_t>(i)] = c(i, param);
    out.push_back(std::move(v));
  }
  return out;
}

double PosteriorSample::median_of(int param) const {
  return stats::median(draws_of(param));
}

namespace {

constexpr double kScalarTarget = 0.44;
constexpr double kPairTarget = 0.35;

struct Block {
  enum class Type { lambda_pair, eps, log_sigma, theta, beta_pair, global_scalar };
  Type type = Type::eps;
  std::string label;
  int country = -1;
  int q = -1;
  int series = -1;
  int param1 = -1;
  int param2 = -1;
  double log_scale1 = 0.0;
  double log_scale2 = 0.0;
  double target = kScalarTarget;
  long proposals = 0;
  long post_proposals = 0;
  long post_accepts = 0;
};

struct CountryCache {
  Eigen::VectorXd psi;        // trajectory at row times
  Eigen::VectorXd mean;       // branch mean per row (0 / log theta / Phi)
  Eigen::VectorXd c0;         // per-row additive constant (scale-dependent)
  Eigen::VectorXd inv_var;    // 1 / scale^2 per row
  Eigen::VectorXd ll;         // per-row log density
  double eps_sq_sum = 0.0;    // sum of eps^2 (for sigma updates)
  double sigma = 0.05;
  Eigen::VectorXd bound_psi;
  std::vector<double> bound_lo;  // realized lower bounds L
  std::vector<double> bound_hi;  // L - log m, or +inf
};

class ChainRunner {
 public:
  ChainRunner(const Model& model, const SamplerConfig& cfg, int chain,
              const std::vector<char>& frozen, const Eigen::VectorXd& frozen_values,
              bool prior_only)
      : model_(model),
        layout_(model.layout()),
        cfg_(cfg),
        frozen_(frozen),
        prior_only_(prior_only),
        rng_(cfg.seed, static_cast<std::uint64_t>(chain)),
        chain_(chain),
        x_(frozen_values) {}

  void run(Eigen::MatrixXd& store, Eigen::MatrixXd& bound_store);
  std::vector<Block> take_blocks() { return std::move(blocks_); }

 private:
  void init_state();
  void build_blocks();
  void refresh_caches();
  void check_finite_start() const;

  double row_term(const ModelRow& row, double psi, double mean, double c0,
                  double inv_var) const {
    const double d = (row.y - psi) - mean;
    if (row.role == ObsRole::bias_t)
      return c0 - t_half_nu1_ * std::log1p(d * d * inv_var * t_inv_nu_);
    return c0 - 0.5 * d * d * inv_var;
  }
  void set_row_scale(int c, int r, double scale, ObsRole role) {
    auto& cc = cache_[static_cast<std::size_t>(c)];
    cc.inv_var(r) = 1.0 / (scale * scale);
    cc.c0(r) = role == ObsRole::bias_t ? t_const_ - std::log(scale)
                                       : -stats::kLogSqrt2Pi - std::log(scale);
  }
  double row_mean(const ModelRow& row, int c) const;
  double row_scale_value(const ModelRow& row) const;

  bool bounds_ok(int c, const Eigen::VectorXd& delta) const {
    const auto& cc = cache_[static_cast<std::size_t>(c)];
    for (Eigen::Index b = 0; b < cc.bound_psi.size(); ++b) {
      const double p = cc.bound_psi(b) + delta(b);
      if (!(p > cc.bound_lo[static_cast<std::size_t>(b)] &&
            p < cc.bound_hi[static_cast<std::size_t>(b)]))
        return false;
    }
    return true;
  }

  void gibbs_bounds();
  void update_lambda_pair(Block& blk);
  void update_eps(Block& blk);
  void update_log_sigma(Block& blk);
  void update_theta(Block& blk);
  void update_beta_pair(Block& blk);
  void update_global(Block& blk);

  void adapt(Block& blk, double alpha, bool accepted) {
    ++blk.proposals;
    if (adapting_) {
      const double step = std::pow(static_cast<double>(blk.proposals) + 10.0, -0.6);
      const double move = step * (alpha - blk.target);
      blk.log_scale1 += move;
      blk.log_scale2 += move;
    } else {
      ++blk.post_proposals;
      if (accepted) ++blk.post_accepts;
    }
  }

  bool in_support(int param, double value) const {
    const auto& e = layout_.entries()[static_cast<std::size_t>(param)];
    return value > e.lo && value < e.hi;
  }

  const Model& model_;
  const ParamLayout& layout_;
  SamplerConfig cfg_;
  std::vector<char> frozen_;
  bool prior_only_;
  Rng rng_;
  int chain_;
  Eigen::VectorXd x_;
  std::vector<CountryCache> cache_;
  std::vector<Block> blocks_;
  bool adapting_ = true;
  // t-distribution constants for the current nu
  double t_const_ = 0.0, t_half_nu1_ = 0.0, t_inv_nu_ = 0.0;
  int total_bounds_ = 0;
};

double ChainRunner::row_mean(const ModelRow& row, int c) const {
  switch (row.role) {
    case ObsRole::vr_complete: return 0.0;
    case ObsRole::vr_trend: return std::log(x_(layout_.theta(c)));
    case ObsRole::bias_normal:
    case ObsRole::bias_t:
      if (row.series >= 0)
        return x_(layout_.beta0(row.series)) + x_(layout_.beta1(row.series)) * row.zc;
      return x_(layout_.mu0(row.group));
    default: return 0.0;
  }
}

double ChainRunner::row_scale_value(const ModelRow& row) const {
  if (row.role == ObsRole::bias_normal || row.role == ObsRole::bias_t)
    return obs_scale(x_(layout_.omega(row.subtype)), row.v);
  return row.v;
}

void ChainRunner::init_state() {
  const auto& countries = model_.countries();
  const auto& cfg = model_.config();

  for (std::size_t c = 0; c < countries.size(); ++c) {
    const int ci = static_cast<int>(c);
    if (!frozen_[static_cast<std::size_t>(layout_.lambda0(ci))]) {
      // Level from the country's mean observed rate, slope from a least-squares
      // line through the log observations; both jittered per chain.
      double mean_u = 0.0;
      double n = 0.0;
      double st = 0.0, sy = 0.0, stt = 0.0, sty = 0.0;
      for (const Observation& o : model_.observations()) {
        if (o.country != countries[c].code) continue;
        mean_u += o.u5mr;
        st += o.ref_year;
        sy += o.log_u5mr;
        stt += o.ref_year * o.ref_year;
        sty += o.ref_year * o.log_u5mr;
        n += 1.0;
      }
      mean_u = n > 0 ? mean_u / n : 50.0;
      const auto& e0 = layout_.entries()[static_cast<std::size_t>(layout_.lambda0(ci))];
      double l0 = std::log(std::max(mean_u, 1.01)) + 0.05 * rng_.normal();
      x_(layout_.lambda0(ci)) = std::clamp(l0, e0.lo + 0.02, e0.hi - 0.02);

      double slope = 0.0;
      const double det = n * stt - st * st;
      if (n >= 2 && std::abs(det) > 1e-9) slope = (n * sty - st * sy) / det;
      const auto& e1 = layout_.entries()[static_cast<std::size_t>(layout_.lambda1(ci))];
      double l1 = slope * cfg.interval + 0.01 * rng_.normal();
      const double margin = 0.05 * (e1.hi - e1.lo);
      x_(layout_.lambda1(ci)) = std::clamp(l1, e1.lo + margin, e1.hi - margin);
    }
    for (int q = 0; q < layout_.eps_count(ci); ++q)
      if (!frozen_[static_cast<std::size_t>(layout_.eps(ci, q))])
        x_(layout_.eps(ci, q)) = 0.01 * rng_.normal();
    if (!frozen_[static_cast<std::size_t>(layout_.log_sigma(ci))])
      x_(layout_.log_sigma(ci)) = cfg.chi_prior_location + 0.3 * rng_.normal();
    if (layout_.theta(ci) >= 0 && !frozen_[static_cast<std::size_t>(layout_.theta(ci))])
      x_(layout_.theta(ci)) = std::clamp(0.5 + 0.2 * rng_.normal(), 0.05, 0.95);
  }

  auto mu0_init = [&](int group) {
    return static_cast<SourceGroup>(group) == SourceGroup::dhs_direct
               ? cfg.dhs_mu0_prior_mean
               : 0.0;
  };
  for (std::size_t s = 0; s < model_.series().size(); ++s) {
    const int si = static_cast<int>(s);
    if (!frozen_[static_cast<std::size_t>(layout_.beta0(si))])
      x_(layout_.beta0(si)) = mu0_init(model_.series()[s].group) + 0.05 * rng_.normal();
    if (!frozen_[static_cast<std::size_t>(layout_.beta1(si))])
      x_(layout_.beta1(si)) = 0.01 * rng_.normal();
  }

  // Hyperparameters start near their prior midpoints, dispersed by seed.
  auto set_if_free = [&](int idx, double value) {
    if (idx >= 0 && !frozen_[static_cast<std::size_t>(idx)]) {
      const auto& e = layout_.entries()[static_cast<std::size_t>(idx)];
      const double span = std::isfinite(e.hi - e.lo) ? (e.hi - e.lo) : 1.0;
      x_(idx) = std::clamp(value, e.lo + 0.02 * span, e.hi - 0.02 * span);
    }
  };
  set_if_free(layout_.chi(), cfg.chi_prior_location + 0.5 * rng_.normal());
  set_if_free(layout_.phi_sigma(), 0.5 * cfg.phi_hi + 0.3 * rng_.normal());
  for (int g = 0; g < kSourceGroupCount; ++g) {
    set_if_free(layout_.mu0(g), mu0_init(g) + 0.02 * rng_.normal());
    set_if_free(layout_.phi0(g), 0.5 * cfg.phi_hi + 0.3 * rng_.normal());
    set_if_free(layout_.mu1(g), 0.005 * rng_.normal());
    set_if_free(layout_.phi1(g), 0.5 * cfg.phi_hi + 0.3 * rng_.normal());
  }
  for (int st = 0; st < kSourceTypeCount; ++st)
    set_if_free(layout_.omega(st), 0.5 * cfg.omega_hi + 0.05 * rng_.normal());
  set_if_free(layout_.nu(), 0.5 * (cfg.nu_lo + cfg.nu_hi) + rng_.normal());
}

void ChainRunner::build_blocks() {
  const auto& countries = model_.countries();
  for (std::size_t c = 0; c < countries.size(); ++c) {
    const int ci = static_cast<int>(c);
    const std::string& code = countries[c].code;
    if (!frozen_[static_cast<std::size_t>(layout_.lambda0(ci))]) {
      Block b;
      b.type = Block::Type::lambda_pair;
      b.label = "lambda[" + code + "]";
      b.country = ci;
      b.param1 = layout_.lambda0(ci);
      b.param2 = layout_.lambda1(ci);
      b.log_scale1 = std::log(0.05);
      b.log_scale2 = std::log(0.02);
      b.target = kPairTarget;
      blocks_.push_back(std::move(b));
    }
    for (int q = 0; q < layout_.eps_count(ci); ++q) {
      if (frozen_[static_cast<std::size_t>(layout_.eps(ci, q))]) continue;
      Block b;
      b.type = Block::Type::eps;
      b.label = "eps[" + code + "][" + std::to_string(q) + "]";
      b.country = ci;
      b.q = q;
      b.param1 = layout_.eps(ci, q);
      b.log_scale1 = std::log(0.05);
      blocks_.push_back(std::move(b));
    }
    if (!frozen_[static_cast<std::size_t>(layout_.log_sigma(ci))]) {
      Block b;
      b.type = Block::Type::log_sigma;
      b.label = "log_sigma[" + code + "]";
      b.country = ci;
      b.param1 = layout_.log_sigma(ci);
      b.log_scale1 = std::log(0.3);
      blocks_.push_back(std::move(b));
    }
    if (layout_.theta(ci) >= 0 && !frozen_[static_cast<std::size_t>(layout_.theta(ci))]) {
      Block b;
      b.type = Block::Type::theta;
      b.label = "theta_vr[" + code + "]";
      b.country = ci;
      b.param1 = layout_.theta(ci);
      b.log_scale1 = std::log(0.1);
      blocks_.push_back(std::move(b));
    }
  }
  for (std::size_t s = 0; s < model_.series().size(); ++s) {
    const int si = static_cast<int>(s);
    if (frozen_[static_cast<std::size_t>(layout_.beta0(si))]) continue;
    Block b;
    b.type = Block::Type::beta_pair;
    b.label = "beta[" + model_.series()[s].id + "]";
    b.series = si;
    b.param1 = layout_.beta0(si);
    b.param2 = layout_.beta1(si);
    b.log_scale1 = std::log(0.05);
    b.log_scale2 = std::log(0.01);
    b.target = kPairTarget;
    blocks_.push_back(std::move(b));
  }
  for (int i = 0; i < layout_.size(); ++i) {
    const auto& e = layout_.entries()[static_cast<std::size_t>(i)];
    if (!e.global || frozen_[static_cast<std::size_t>(i)]) continue;
    Block b;
    b.type = Block::Type::global_scalar;
    b.label = e.name;
    b.param1 = i;
    b.log_scale1 = std::log(e.kind == ParamLayout::Kind::nu ? 2.0 : 0.05);
    blocks_.push_back(std::move(b));
  }
}

void ChainRunner::refresh_caches() {
  const auto& countries = model_.countries();
  cache_.resize(countries.size());

  if (layout_.nu() >= 0) {
    const double nu = x_(layout_.nu());
    t_const_ = stats::t_log_norm_const(nu);
    t_half_nu1_ = 0.5 * (nu + 1.0);
    t_inv_nu_ = 1.0 / nu;
  }

  total_bounds_ = 0;
  for (std::size_t c = 0; c < countries.size(); ++c) {
    const int ci = static_cast<int>(c);
    auto& cc = cache_[c];
    const auto& cm = countries[c];
    const auto n = static_cast<Eigen::Index>(cm.rows.size());
    cc.psi = model_.psi_rows(ci, x_);
    cc.mean.resize(n);
    cc.c0.resize(n);
    cc.inv_var.resize(n);
    cc.ll.resize(n);
    cc.sigma = model_.sigma_of(ci, x_);
    cc.eps_sq_sum = 0.0;
    for (int q = 0; q < layout_.eps_count(ci); ++q)
      cc.eps_sq_sum += x_(layout_.eps(ci, q)) * x_(layout_.eps(ci, q));
    for (Eigen::Index r = 0; r < n; ++r) {
      const ModelRow& row = cm.rows[static_cast<std::size_t>(r)];
      cc.mean(r) = row_mean(row, ci);
      set_row_scale(ci, static_cast<int>(r), row_scale_value(row), row.role);
      cc.ll(r) = row_term(row, cc.psi(r), cc.mean(r), cc.c0(r), cc.inv_var(r));
    }
    cc.bound_psi = model_.psi_bounds(ci, x_);
    cc.bound_lo.assign(cm.bounds.size(), -std::numeric_limits<double>::infinity());
    cc.bound_hi.assign(cm.bounds.size(), std::numeric_limits<double>::infinity());
    total_bounds_ += static_cast<int>(cm.bounds.size());
  }
}

void ChainRunner::check_finite_start() const {
  for (int i = 0; i < layout_.size(); ++i) {
    const auto& e = layout_.entries()[static_cast<std::size_t>(i)];
    if (!(x_(i) > e.lo && x_(i) < e.hi) || !std::isfinite(x_(i)))
      throw SamplerError("non-finite posterior at initialization: parameter " + e.name +
                         " outside its support");
  }
  const double lp = model_.log_prior(x_);
  if (!std::isfinite(lp))
    throw SamplerError("non-finite posterior at initialization: prior block");
  if (prior_only_) return;
  for (std::size_t c = 0; c < cache_.size(); ++c) {
    for (Eigen::Index r = 0; r < cache_[c].ll.size(); ++r) {
      if (!std::isfinite(cache_[c].ll(r)))
        throw SamplerError("non-finite posterior at initialization: likelihood block for " +
                           model_.countries()[c].code + ", observation row " +
                           std::to_string(r));
    }
  }
}

void ChainRunner::gibbs_bounds() {
  const auto& countries = model_.countries();
  for (std::size_t c = 0; c < countries.size(); ++c) {
    auto& cc = cache_[c];
    const auto& bounds = countries[c].bounds;
    for (std::size_t b = 0; b < bounds.size(); ++b) {
      const double psi = cc.bound_psi(static_cast<Eigen::Index>(b));
      double lo = -std::numeric_limits<double>::infinity();
      if (bounds[b].min_completeness) lo = psi + std::log(*bounds[b].min_completeness);
      const double L =
          stats::truncated_normal(rng_, bounds[b].y, bounds[b].v, lo, psi);
      cc.bound_lo[b] = L;
      cc.bound_hi[b] = bounds[b].min_completeness
                           ? L - std::log(*bounds[b].min_completeness)
                           : std::numeric_limits<double>::infinity();
    }
  }
}

void ChainRunner::update_lambda_pair(Block& blk) {
  const int c = blk.country;
  const auto& cm = model_.countries()[static_cast<std::size_t>(c)];
  auto& cc = cache_[static_cast<std::size_t>(c)];
  const double d0 = std::exp(blk.log_scale1) * rng_.normal();
  const double d1 = std::exp(blk.log_scale2) * rng_.normal();
  const double l0 = x_(blk.param1) + d0;
  const double l1 = x_(blk.param2) + d1;
  if (!in_support(blk.param1, l0) || !in_support(blk.param2, l1)) {
    adapt(blk, 0.0, false);
    return;
  }
  double delta = d0;  // Jacobian of the uniform-level prior on exp(lambda0)
  Eigen::VectorXd new_ll;
  if (!prior_only_) {
    Eigen::VectorXd bdelta =
        Eigen::VectorXd::Constant(cc.bound_psi.size(), d0) + d1 * cm.bound_g;
    if (!bounds_ok(c, bdelta)) {
      adapt(blk, 0.0, false);
      return;
    }
    new_ll.resize(cc.ll.size());
    for (Eigen::Index r = 0; r < cc.ll.size(); ++r) {
      const double psi = cc.psi(r) + d0 + d1 * cm.g(r);
      new_ll(r) = row_term(cm.rows[static_cast<std::size_t>(r)], psi, cc.mean(r), cc.c0(r),
                           cc.inv_var(r));
    }
    delta += new_ll.sum() - cc.ll.sum();
  }
  const double alpha = std::min(1.0, std::exp(delta));
  const bool accept = rng_.uniform() < alpha;
  if (accept) {
    x_(blk.param1) = l0;
    x_(blk.param2) = l1;
    if (!prior_only_) {
      cc.psi.array() += d0;
      cc.psi += d1 * cm.g;
      cc.ll = new_ll;
      cc.bound_psi.array() += d0;
      cc.bound_psi += d1 * cm.bound_g;
    }
  }
  adapt(blk, alpha, accept);
}

void ChainRunner::update_eps(Block& blk) {
  const int c = blk.country;
  const auto& cm = model_.countries()[static_cast<std::size_t>(c)];
  auto& cc = cache_[static_cast<std::size_t>(c)];
  const double de = std::exp(blk.log_scale1) * rng_.normal();
  const double old = x_(blk.param1);
  const double prop = old + de;
  double delta = -0.5 * (prop * prop - old * old) / (cc.sigma * cc.sigma);
  Eigen::VectorXd new_ll;
  if (!prior_only_) {
    if (cc.bound_psi.size() > 0) {
      Eigen::VectorXd bdelta = de * cm.bound_m.col(blk.q);
      if (!bounds_ok(c, bdelta)) {
        adapt(blk, 0.0, false);
        return;
      }
    }
    new_ll.resize(cc.ll.size());
    const auto mcol = cm.m.col(blk.q);
    for (Eigen::Index r = 0; r < cc.ll.size(); ++r) {
      const double psi = cc.psi(r) + de * mcol(r);
      new_ll(r) = row_term(cm.rows[static_cast<std::size_t>(r)], psi, cc.mean(r), cc.c0(r),
                           cc.inv_var(r));
    }
    delta += new_ll.sum() - cc.ll.sum();
  }
  const double alpha = std::min(1.0, std::exp(delta));
  const bool accept = rng_.uniform() < alpha;
  if (accept) {
    x_(blk.param1) = prop;
    cc.eps_sq_sum += prop * prop - old * old;
    if (!prior_only_) {
      cc.psi += de * cm.m.col(blk.q);
      cc.ll = new_ll;
      if (cc.bound_psi.size() > 0) cc.bound_psi += de * cm.bound_m.col(blk.q);
    }
  }
  adapt(blk, alpha, accept);
}

void ChainRunner::update_log_sigma(Block& blk) {
  const int c = blk.country;
  auto& cc = cache_[static_cast<std::size_t>(c)];
  const double dls = std::exp(blk.log_scale1) * rng_.normal();
  const double old = x_(blk.param1);
  const double prop = old + dls;
  const double chi = x_(layout_.chi());
  const double phi_sigma = x_(layout_.phi_sigma());
  const auto q = static_cast<double>(layout_.eps_count(c));
  double delta = stats::log_normal_pdf(prop, chi, phi_sigma) -
                 stats::log_normal_pdf(old, chi, phi_sigma);
  delta += -q * (prop - old) -
           0.5 * cc.eps_sq_sum * (std::exp(-2.0 * prop) - std::exp(-2.0 * old));
  const double alpha = std::min(1.0, std::exp(delta));
  const bool accept = rng_.uniform() < alpha;
  if (accept) {
    x_(blk.param1) = prop;
    cc.sigma = std::exp(prop);
  }
  adapt(blk, alpha, accept);
}

void ChainRunner::update_theta(Block& blk) {
  const int c = blk.country;
  const auto& cm = model_.countries()[static_cast<std::size_t>(c)];
  auto& cc = cache_[static_cast<std::size_t>(c)];
  const double dt = std::exp(blk.log_scale1) * rng_.normal();
  const double prop = x_(blk.param1) + dt;
  if (!in_support(blk.param1, prop)) {
    adapt(blk, 0.0, false);
    return;
  }
  double delta = 0.0;
  const double new_mean = std::log(prop);
  std::vector<std::pair<int, double>> updates;
  if (!prior_only_) {
    for (std::size_t r = 0; r < cm.rows.size(); ++r) {
      if (cm.rows[r].role != ObsRole::vr_trend) continue;
      const auto ri = static_cast<Eigen::Index>(r);
      const double term = row_term(cm.rows[r], cc.psi(ri), new_mean, cc.c0(ri),
                                   cc.inv_var(ri));
      delta += term - cc.ll(ri);
      updates.emplace_back(static_cast<int>(r), term);
    }
  }
  const double alpha = std::min(1.0, std::exp(delta));
  const bool accept = rng_.uniform() < alpha;
  if (accept) {
    x_(blk.param1) = prop;
    for (const auto& [r, term] : updates) {
      cc.mean(r) = new_mean;
      cc.ll(r) = term;
    }
  }
  adapt(blk, alpha, accept);
}

void ChainRunner::update_beta_pair(Block& blk) {
  const int s = blk.series;
  const auto& ms = model_.series()[static_cast<std::size_t>(s)];
  const double d0 = std::exp(blk.log_scale1) * rng_.normal();
  const double d1 = std::exp(blk.log_scale2) * rng_.normal();
  const double b0 = x_(blk.param1) + d0;
  const double b1 = x_(blk.param2) + d1;
  const int g = ms.group;
  double delta = stats::log_normal_pdf(b0, x_(layout_.mu0(g)), x_(layout_.phi0(g))) -
                 stats::log_normal_pdf(x_(blk.param1), x_(layout_.mu0(g)),
                                       x_(layout_.phi0(g))) +
                 stats::log_normal_pdf(b1, x_(layout_.mu1(g)), x_(layout_.phi1(g))) -
                 stats::log_normal_pdf(x_(blk.param2), x_(layout_.mu1(g)),
                                       x_(layout_.phi1(g)));
  std::vector<std::pair<std::pair<int, int>, std::pair<double, double>>> updates;
  if (!prior_only_) {
    for (const auto& [ci, ri] : ms.rows) {
      const auto& cm = model_.countries()[static_cast<std::size_t>(ci)];
      auto& cc = cache_[static_cast<std::size_t>(ci)];
      const ModelRow& row = cm.rows[static_cast<std::size_t>(ri)];
      const double mean = b0 + b1 * row.zc;
      const double term = row_term(row, cc.psi(ri), mean, cc.c0(ri), cc.inv_var(ri));
      delta += term - cc.ll(ri);
      updates.push_back({{ci, ri}, {mean, term}});
    }
  }
  const double alpha = std::min(1.0, std::exp(delta));
  const bool accept = rng_.uniform() < alpha;
  if (accept) {
    x_(blk.param1) = b0;
    x_(blk.param2) = b1;
    for (const auto& [key, val] : updates) {
      auto& cc = cache_[static_cast<std::size_t>(key.first)];
      cc.mean(key.second) = val.first;
      cc.ll(key.second) = val.second;
    }
  }
  adapt(blk, alpha, accept);
}

void ChainRunner::update_global(Block& blk) {
  const auto& entry = layout_.entries()[static_cast<std::size_t>(blk.param1)];
  const double dv = std::exp(blk.log_scale1) * rng_.normal();
  const double old = x_(blk.param1);
  const double prop = old + dv;
  if (!in_support(blk.param1, prop)) {
    adapt(blk, 0.0, false);
    return;
  }

  double delta = 0.0;
  // Row-level updates to commit on acceptance: (country, row) -> (mean, term)
  std::vector<std::pair<std::pair<int, int>, std::pair<double, double>>> mean_updates;
  // Scale updates: (country, row) -> new scale (c0/inv_var recomputed on commit)
  std::vector<std::pair<std::pair<int, int>, double>> scale_updates;
  bool nu_update = false;

  using Kind = ParamLayout::Kind;
  switch (entry.kind) {
    case Kind::chi: {
      const double sd = model_.chi_prior_sd();
      delta += stats::log_normal_pdf(prop, model_.config().chi_prior_location, sd) -
               stats::log_normal_pdf(old, model_.config().chi_prior_location, sd);
      if (!model_.config().fixed_sigma) {
        const double phi_sigma = x_(layout_.phi_sigma());
        for (std::size_t c = 0; c < model_.countries().size(); ++c) {
          const double ls = x_(layout_.log_sigma(static_cast<int>(c)));
          delta += stats::log_normal_pdf(ls, prop, phi_sigma) -
                   stats::log_normal_pdf(ls, old, phi_sigma);
        }
      }
      break;
    }
    case Kind::phi_sigma: {
      if (!model_.config().fixed_sigma) {
        const double chi = x_(layout_.chi());
        for (std::size_t c = 0; c < model_.countries().size(); ++c) {
          const double ls = x_(layout_.log_sigma(static_cast<int>(c)));
          delta += stats::log_normal_pdf(ls, chi, prop) -
                   stats::log_normal_pdf(ls, chi, old);
        }
      }
      break;
    }
    case Kind::mu0: {
      const bool dhs = static_cast<SourceGroup>(entry.group) == SourceGroup::dhs_direct;
      const double pm = dhs ? model_.config().dhs_mu0_prior_mean : 0.0;
      const double ps = dhs ? model_.config().dhs_mu0_prior_sd : model_.config().mu0_prior_sd;
      delta += stats::log_normal_pdf(prop, pm, ps) - stats::log_normal_pdf(old, pm, ps);
      const double phi0 = layout_.phi0(entry.group) >= 0 ? x_(layout_.phi0(entry.group)) : 0.0;
      for (std::size_t s = 0; s < model_.series().size(); ++s) {
        if (model_.series()[s].group != entry.group) continue;
        const double b0 = x_(layout_.beta0(static_cast<int>(s)));
        delta += stats::log_normal_pdf(b0, prop, phi0) -
                 stats::log_normal_pdf(b0, old, phi0);
      }
      if (!prior_only_) {
        // Non-repeated sources read mu0 directly as their bias mean.
        for (std::size_t c = 0; c < model_.countries().size(); ++c) {
          const auto& cm = model_.countries()[c];
          auto& cc = cache_[c];
          for (std::size_t r = 0; r < cm.rows.size(); ++r) {
            const ModelRow& row = cm.rows[r];
            if (row.series >= 0 || row.group != entry.group) continue;
            if (row.role != ObsRole::bias_normal && row.role != ObsRole::bias_t) continue;
            const auto ri = static_cast<Eigen::Index>(r);
            const double term = row_term(row, cc.psi(ri), prop, cc.c0(ri), cc.inv_var(ri));
            delta += term - cc.ll(ri);
            mean_updates.push_back({{static_cast<int>(c), static_cast<int>(r)}, {prop, term}});
          }
        }
      }
      break;
    }
    case Kind::phi0:
    case Kind::mu1:
    case Kind::phi1: {
      if (entry.kind == Kind::mu1) {
        const double ps = model_.config().mu1_prior_sd;
        delta += stats::log_normal_pdf(prop, 0.0, ps) - stats::log_normal_pdf(old, 0.0, ps);
      }
      const bool level = entry.kind == Kind::phi0;
      const bool is_mean = entry.kind == Kind::mu1;
      for (std::size_t s = 0; s < model_.series().size(); ++s) {
        if (model_.series()[s].group != entry.group) continue;
        const int si = static_cast<int>(s);
        if (level) {
          const double b0 = x_(layout_.beta0(si));
          const double mu = x_(layout_.mu0(entry.group));
          delta += stats::log_normal_pdf(b0, mu, prop) - stats::log_normal_pdf(b0, mu, old);
        } else {
          const double b1 = x_(layout_.beta1(si));
          const double mu = is_mean ? prop : x_(layout_.mu1(entry.group));
          const double ph = is_mean ? x_(layout_.phi1(entry.group)) : prop;
          const double mu_old = is_mean ? old : mu;
          const double ph_old = is_mean ? ph : old;
          delta += stats::log_normal_pdf(b1, mu, ph) -
                   stats::log_normal_pdf(b1, mu_old, ph_old);
        }
      }
      break;
    }
    case Kind::omega: {
      if (!prior_only_) {
        for (std::size_t c = 0; c < model_.countries().size(); ++c) {
          const auto& cm = model_.countries()[c];
          auto& cc = cache_[c];
          for (std::size_t r = 0; r < cm.rows.size(); ++r) {
            const ModelRow& row = cm.rows[r];
            if (row.subtype != entry.subtype) continue;
            const auto ri = static_cast<Eigen::Index>(r);
            const double scale = obs_scale(prop, row.v);
            const double c0 = row.role == ObsRole::bias_t
                                  ? t_const_ - std::log(scale)
                                  : -stats::kLogSqrt2Pi - std::log(scale);
            const double term =
                row_term(row, cc.psi(ri), cc.mean(ri), c0, 1.0 / (scale * scale));
            delta += term - cc.ll(ri);
            scale_updates.push_back({{static_cast<int>(c), static_cast<int>(r)}, scale});
          }
        }
      }
      break;
    }
    case Kind::nu: {
      nu_update = true;
      if (!prior_only_) {
        const double tc = stats::t_log_norm_const(prop);
        const double half = 0.5 * (prop + 1.0);
        const double inv = 1.0 / prop;
        for (std::size_t c = 0; c < model_.countries().size(); ++c) {
          const auto& cm = model_.countries()[c];
          auto& cc = cache_[c];
          for (std::size_t r = 0; r < cm.rows.size(); ++r) {
            const ModelRow& row = cm.rows[r];
            if (row.role != ObsRole::bias_t) continue;
            const auto ri = static_cast<Eigen::Index>(r);
            const double scale = 1.0 / std::sqrt(cc.inv_var(ri));
            const double d = (row.y - cc.psi(ri)) - cc.mean(ri);
            const double term = tc - std::log(scale) -
                                half * std::log1p(d * d * cc.inv_var(ri) * inv);
            delta += term - cc.ll(ri);
          }
        }
      }
      break;
    }
    default:
      break;
  }

  const double alpha = std::min(1.0, std::exp(delta));
  const bool accept = rng_.uniform() < alpha;
  if (accept) {
    x_(blk.param1) = prop;
    for (const auto& [key, val] : mean_updates) {
      auto& cc = cache_[static_cast<std::size_t>(key.first)];
      cc.mean(key.second) = val.first;
      cc.ll(key.second) = val.second;
    }
    if (!scale_updates.empty()) {
      for (const auto& [key, scale] : scale_updates) {
        const auto& row = model_.countries()[static_cast<std::size_t>(key.first)]
                              .rows[static_cast<std::size_t>(key.second)];
        auto& cc = cache_[static_cast<std::size_t>(key.first)];
        set_row_scale(key.first, key.second, scale, row.role);
        cc.ll(key.second) =
            row_term(row, cc.psi(key.second), cc.mean(key.second), cc.c0(key.second),
                     cc.inv_var(key.second));
      }
    }
    if (nu_update) {
      const double nu = prop;
      t_const_ = stats::t_log_norm_const(nu);
      t_half_nu1_ = 0.5 * (nu + 1.0);
      t_inv_nu_ = 1.0 / nu;
      if (!prior_only_) {
        for (std::size_t c = 0; c < model_.countries().size(); ++c) {
          const auto& cm = model_.countries()[c];
          auto& cc = cache_[c];
          for (std::size_t r = 0; r < cm.rows.size(); ++r) {
            const ModelRow& row = cm.rows[r];
            if (row.role != ObsRole::bias_t) continue;
            const auto ri = static_cast<Eigen::Index>(r);
            const double scale = 1.0 / std::sqrt(cc.inv_var(ri));
            cc.c0(ri) = t_const_ - std::log(scale);
            cc.ll(ri) = row_term(row, cc.psi(ri), cc.mean(ri), cc.c0(ri), cc.inv_var(ri));
          }
        }
      }
    }
  }
  adapt(blk, alpha, accept);
}

void ChainRunner::run(Eigen::MatrixXd& store, Eigen::MatrixXd& bound_store) {
  init_state();
  build_blocks();
  refresh_caches();
  check_finite_start();

  const long adapt_until = cfg_.adapt_iters < 0 ? cfg_.burn_in : cfg_.adapt_iters;
  store.resize(cfg_.retained_per_chain(), layout_.size());
  bound_store.resize(cfg_.retained_per_chain(), total_bounds_);
  long stored = 0;

  for (long it = 1; it <= cfg_.n_iter; ++it) {
    adapting_ = it <= adapt_until;
    if (!prior_only_) gibbs_bounds();
    for (Block& blk : blocks_) {
      switch (blk.type) {
        case Block::Type::lambda_pair: update_lambda_pair(blk); break;
        case Block::Type::eps: update_eps(blk); break;
        case Block::Type::log_sigma: update_log_sigma(blk); break;
        case Block::Type::theta: update_theta(blk); break;
        case Block::Type::beta_pair: update_beta_pair(blk); break;
        case Block::Type::global_scalar: update_global(blk); break;
      }
    }
    if (it % 2000 == 0) refresh_caches();  // guards against float drift in psi
    if (it > cfg_.burn_in && (it - cfg_.burn_in) % cfg_.thin == 0 &&
        stored < store.rows()) {
      store.row(stored) = x_.transpose();
      int bcol = 0;
      for (const auto& cc : cache_)
        for (double lo : cc.bound_lo) bound_store(stored, bcol++) = lo;
      ++stored;
    }
  }
}

FitResult fit_chains(const Model& model, const SamplerConfig& cfg,
                     const std::vector<char>& frozen, const Eigen::VectorXd& base_state,
                     bool prior_only) {
  cfg.validate();
  const int n = cfg.n_chains;
  std::vector<Eigen::MatrixXd> stores(static_cast<std::size_t>(n));
  std::vector<Eigen::MatrixXd> bound_stores(static_cast<std::size_t>(n));
  std::vector<std::vector<Block>> blocks(static_cast<std::size_t>(n));
  std::vector<std::exception_ptr> errors(static_cast<std::size_t>(n));

  auto run_chain = [&](int c) {
    try {
      ChainRunner runner(model, cfg, c, frozen, base_state, prior_only);
      runner.run(stores[static_cast<std::size_t>(c)],
                 bound_stores[static_cast<std::size_t>(c)]);
      blocks[static_cast<std::size_t>(c)] = runner.take_blocks();
    } catch (...) {
      errors[static_cast<std::size_t>(c)] = std::current_exception();
    }
  };

  if (cfg.jobs <= 1) {
    for (int c = 0; c < n; ++c) run_chain(c);
  } else {
    for (int first = 0; first < n; first += cfg.jobs) {
      std::vector<std::thread> pool;
      for (int c = first; c < std::min(n, first + cfg.jobs); ++c)
        pool.emplace_back(run_chain, c);
      for (auto& t : pool) t.join();
    }
  }
  for (const auto& e : errors)
    if (e) std::rethrow_exception(e);

  PosteriorSample sample(model.layout(), std::move(stores));

  Diagnostics diag;
  const auto& layout = model.layout();
  for (int p = 0; p < layout.size(); ++p) {
    if (frozen[static_cast<std::size_t>(p)]) continue;
    ParamDiagnostic pd;
    pd.name = layout.entries()[static_cast<std::size_t>(p)].name;
    const auto per_chain = sample.chains_of(p);
    if (per_chain.size() >= 2) {
      const auto gr = gelman_rubin(per_chain);
      pd.rhat = gr.rhat;
      pd.rhat_degenerate = gr.degenerate;
    }
    pd.ess = effective_sample_size(per_chain);
    auto pooled = sample.draws_of(p);
    double mean = 0.0;
    for (double v : pooled) mean += v;
    pd.mean = mean / static_cast<double>(pooled.size());
    pd.quantiles = stats::posterior_summary(std::move(pooled));
    if (!pd.rhat_degenerate && pd.rhat > diag.max_rhat) {
      diag.max_rhat = pd.rhat;
      diag.worst_param = pd.name;
    }
    diag.params.push_back(std::move(pd));
  }
  // Acceptance rates, pooled across chains per block.
  if (!blocks.empty()) {
    for (std::size_t b = 0; b < blocks[0].size(); ++b) {
      long acc = 0, props = 0;
      for (const auto& chain_blocks : blocks) {
        acc += chain_blocks[b].post_accepts;
        props += chain_blocks[b].post_proposals;
      }
      BlockRate rate;
      rate.label = blocks[0][b].label;
      rate.accept_rate = props > 0 ? static_cast<double>(acc) / static_cast<double>(props)
                                   : 0.0;
      diag.blocks.push_back(std::move(rate));
    }
  }

  FitResult out;
  out.sample = std::move(sample);
  out.diagnostics = std::move(diag);
  out.bound_lower = std::move(bound_stores);
  return out;
}

}  // namespace

FitResult run_global(const Model& model, const SamplerConfig& cfg) {
  std::vector<char> frozen(static_cast<std::size_t>(model.layout().size()), 0);
  Eigen::VectorXd base = Eigen::VectorXd::Zero(model.layout().size());
  if (model.config().fixed_sigma) {
    const double ls = std::log(*model.config().fixed_sigma);
    for (std::size_t c = 0; c < model.countries().size(); ++c) {
      const int idx = model.layout().log_sigma(static_cast<int>(c));
      frozen[static_cast<std::size_t>(idx)] = 1;
      base(idx) = ls;
    }
  }
  return fit_chains(model, cfg, frozen, base, cfg.prior_only);
}

FitResult run_country(const Model& model, const GlobalParams& fixed,
                      const SamplerConfig& cfg) {
  std::vector<char> frozen(static_cast<std::size_t>(model.layout().size()), 0);
  Eigen::VectorXd base = Eigen::VectorXd::Zero(model.layout().size());
  model.set_globals_in_state(fixed, base);  // throws on missing hyperparameters
  for (int p = 0; p < model.layout().size(); ++p)
    if (model.layout().entries()[static_cast<std::size_t>(p)].global)
      frozen[static_cast<std::size_t>(p)] = 1;
  if (model.config().fixed_sigma) {
    const double ls = std::log(*model.config().fixed_sigma);
    for (std::size_t c = 0; c < model.countries().size(); ++c) {
      const int idx = model.layout().log_sigma(static_cast<int>(c));
      frozen[static_cast<std::size_t>(idx)] = 1;
      base(idx) = ls;
    }
  }
  return fit_chains(model, cfg, frozen, base, cfg.prior_only);
}

Eigen::MatrixXd alpha_eff_draws(const Model& model, int country,
                                const PosteriorSample& sample) {
  const auto& layout = model.layout();
  const auto& coeffs = model.countries()[static_cast<std::size_t>(country)].coeffs;
  const long total = sample.total_draws();
  const int q = coeffs.q_eff();
  Eigen::MatrixXd eps(total, q);
  Eigen::VectorXd lambda0(total), lambda1(total);
  long row = 0;
  for (int c = 0; c < sample.n_chains(); ++c) {
    const Eigen::MatrixXd& ch = sample.chain(c);
    for (Eigen::Index i = 0; i < ch.rows(); ++i, ++row) {
      lambda0(row) = ch(i, layout.lambda0(country));
      lambda1(row) = ch(i, layout.lambda1(country));
      for (int j = 0; j < q; ++j) eps(row, j) = ch(i, layout.eps(country, j));
    }
  }
  Eigen::MatrixXd alpha = eps * coeffs.diff_pinv_eff().transpose();
  alpha.colwise() += lambda0;
  alpha += lambda1 * coeffs.centered_position().transpose();
  return alpha;
}

Eigen::VectorXd sigma2_draws(const Model& model, int country,
                             const PosteriorSample& sample) {
  Eigen::VectorXd out(sample.total_draws());
  if (model.config().fixed_sigma) {
    out.setConstant(*model.config().fixed_sigma * *model.config().fixed_sigma);
    return out;
  }
  const int idx = model.layout().log_sigma(country);
  long row = 0;
  for (int c = 0; c < sample.n_chains(); ++c) {
    const Eigen::MatrixXd& ch = sample.chain(c);
    for (Eigen::Index i = 0; i < ch.rows(); ++i, ++row) {
      const double s = std::exp(ch(i, idx));
      out(row) = s * s;
    }
  }
  return out;
}

}  // namespace b3
