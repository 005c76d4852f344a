#pragma once

#include <Eigen/Dense>
#include <vector>

#include "b3/basis.hpp"
#include "b3/rng.hpp"
#include "b3/stats.hpp"

namespace b3 {

/// Global distribution of observation-period changes in spline coefficients:
/// the median (G) and variance (V) of the per-country, per-index posterior
/// medians of first differences.
struct GlobalChangeDist {
  double median_change = 0.0;  // G
  double variance = 0.0;       // V
};

/// Throws std::invalid_argument with fewer than two values or a degenerate
/// (zero) variance.
GlobalChangeDist build_global_dist(const std::vector<double>& median_changes);

struct PoolResult {
  double mean = 0.0;      // Gamma
  double variance = 0.0;  // Theta
  double weight = 0.0;    // implied logarithmic pooling weight w
};

/// One step of the pooled predictive recursion:
///   Gamma = W*G + (1-W)*gamma_prev,  Theta = W*V + (1-W)*theta_prev,
/// with the implied per-step logarithmic weight w = W*V / (W*V + (1-W)*theta_prev).
PoolResult pool_step(double gamma_prev, double theta_prev, const GlobalChangeDist& dist,
                     double overall_weight);

/// Extend per-draw coefficient vectors from index K-1 to P-1 (0-based) by
/// sequentially sampling pooled changes. The fitted coefficient K (the one
/// supported by only 1.25 years of data) is replaced. `alpha` is draws x K_eff,
/// `sigma2` the matching smoothing-variance draws; the result is draws x P_eff.
Eigen::MatrixXd project_coefficients(const Eigen::MatrixXd& alpha,
                                     const Eigen::VectorXd& sigma2, int p_eff,
                                     const GlobalChangeDist& dist, double overall_weight,
                                     Rng& rng);

/// Pointwise natural-scale summaries of exp(sum_k b_k(t) alpha_k).
struct TrajectorySummary {
  std::vector<double> years;
  std::vector<double> median;
  std::vector<double> lower90;
  std::vector<double> upper90;
};

/// Log-scale trajectory draws at one time point (alpha is draws x p_eff).
Eigen::VectorXd psi_draws_at(const Eigen::MatrixXd& alpha, const CoefficientLayout& coeffs,
                             double t);

TrajectorySummary trajectory(const Eigen::MatrixXd& alpha, const CoefficientLayout& coeffs,
                             const std::vector<double>& years);

/// Per-country posterior-median first differences over the observation period
/// (indices 2..K-1 in 1-based terms), the raw material of the global change
/// distribution. Differences inside one merged conflict group are skipped.
std::vector<double> median_first_differences(const Eigen::MatrixXd& alpha,
                                             const CoefficientLayout& coeffs);

}  // namespace b3
