#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "b3/model.hpp"
#include "b3/stats.hpp"

namespace b3 {

struct SamplerConfig {
  int n_chains = 6;
  long n_iter = 50000;   // total iterations per chain
  long burn_in = 10000;  // discarded, proposal adaptation happens here
  int thin = 20;         // keep every thin-th iteration after burn-in
  std::uint64_t seed = 4711;
  long adapt_iters = -1;  // adaptation window; -1 means the whole burn-in
  int jobs = 1;           // chains run in parallel up to this many threads
  bool prior_only = false;  // diagnostic mode: drop all data terms

  long retained_per_chain() const { return (n_iter - burn_in) / thin; }
  void validate() const;  // throws ConfigError

  /// Paper defaults for the two run modes.
  static SamplerConfig global_defaults() { return SamplerConfig{}; }
  static SamplerConfig country_defaults() {
    SamplerConfig c;
    c.n_iter = 35000;
    return c;
  }
};

/// Potential scale reduction over two or more chains of retained draws.
struct GelmanRubinResult {
  double rhat = 1.0;
  bool degenerate = false;  // zero within-chain variance
};
GelmanRubinResult gelman_rubin(const std::vector<std::vector<double>>& chains);

/// Effective sample size across chains (initial-monotone autocorrelation sum).
double effective_sample_size(const std::vector<std::vector<double>>& chains);

/// 5/50/95 summary of a pooled draw vector (linear-interpolation quantiles).
inline stats::QuantileSummary posterior_summary(std::vector<double> draws) {
  return stats::posterior_summary(std::move(draws));
}

struct ParamDiagnostic {
  std::string name;
  double rhat = 1.0;
  bool rhat_degenerate = false;
  double ess = 0.0;
  double mean = 0.0;
  stats::QuantileSummary quantiles;
};

struct BlockRate {
  std::string label;
  double accept_rate = 0.0;
};

struct Diagnostics {
  std::vector<ParamDiagnostic> params;  // sampled (non-frozen) parameters only
  std::vector<BlockRate> blocks;        // post-adaptation acceptance rates
  double max_rhat = 1.0;
  std::string worst_param;
};

/// Retained draws of all chains over the model's parameter layout.
class PosteriorSample {
 public:
  PosteriorSample() = default;
  PosteriorSample(ParamLayout layout, std::vector<Eigen::MatrixXd> chains)
      : layout_(std::move(layout)), chains_(std::move(chains)) {}

  const ParamLayout& layout() const { return layout_; }
  int n_chains() const { return static_cast<int>(chains_.size()); }
  long retained_per_chain() const { return chains_.empty() ? 0 : chains_[0].rows(); }
  long total_draws() const { return retained_per_chain() * n_chains(); }
  const Eigen::MatrixXd& chain(int c) const { return chains_[static_cast<std::size_t>(c)]; }

  /// Draw `j` counted across chains in order.
  Eigen::VectorXd draw(long j) const;
  std::vector<double> draws_of(int param) const;
  std::vector<std::vector<double>> chains_of(int param) const;
  double median_of(int param) const;

 private:
  ParamLayout layout_;
  std::vector<Eigen::MatrixXd> chains_;
};

struct FitResult {
  PosteriorSample sample;
  Diagnostics diagnostics;
  /// Realized lower bounds per retained draw (chains x (retained x bounds));
  /// bound columns follow country order, then each country's bound order.
  std::vector<Eigen::MatrixXd> bound_lower;
};

/// Fit the full joint model: all country, series, and global parameters.
FitResult run_global(const Model& model, const SamplerConfig& cfg);

/// Country-specific mode: global hyperparameters pinned to `fixed` (normally
/// the posterior medians of a global run); only country- and series-level
/// parameters move. Throws ConfigError when a hyperparameter needed by the
/// model's data is missing from `fixed`.
FitResult run_country(const Model& model, const GlobalParams& fixed,
                      const SamplerConfig& cfg);

/// Observation-period effective coefficients per draw (draws x k_eff).
Eigen::MatrixXd alpha_eff_draws(const Model& model, int country,
                                const PosteriorSample& sample);

/// Smoothing variances per draw.
Eigen::VectorXd sigma2_draws(const Model& model, int country,
                             const PosteriorSample& sample);

}  // namespace b3
