#include "b3/project.hpp"

#include <cmath>
#include <stdexcept>

namespace b3 {

GlobalChangeDist build_global_dist(const std::vector<double>& median_changes) {
  if (median_changes.size() < 2)
    throw std::invalid_argument(
        "build_global_dist: need at least two median changes (variance undefined)");
  GlobalChangeDist dist;
  dist.median_change = stats::median(median_changes);
  dist.variance = stats::variance(median_changes);
  if (!(dist.variance > 0.0))
    throw std::invalid_argument("build_global_dist: degenerate (zero) variance");
  return dist;
}

PoolResult pool_step(double gamma_prev, double theta_prev, const GlobalChangeDist& dist,
                     double overall_weight) {
  if (!(overall_weight >= 0.0 && overall_weight <= 1.0))
    throw std::invalid_argument("pool_step: W must lie in [0, 1]");
  if (!(theta_prev > 0.0)) throw std::invalid_argument("pool_step: theta_prev must be > 0");
  PoolResult out;
  const double w = overall_weight;
  out.mean = w * dist.median_change + (1.0 - w) * gamma_prev;
  out.variance = w * dist.variance + (1.0 - w) * theta_prev;
  out.weight = w * dist.variance / (w * dist.variance + (1.0 - w) * theta_prev);
  return out;
}

Eigen::MatrixXd project_coefficients(const Eigen::MatrixXd& alpha,
                                     const Eigen::VectorXd& sigma2, int p_eff,
                                     const GlobalChangeDist& dist, double overall_weight,
                                     Rng& rng) {
  const auto k = static_cast<int>(alpha.cols());
  if (p_eff < k)
    throw std::invalid_argument("project_coefficients: projection index before K");
  if (k < 3)
    throw std::invalid_argument("project_coefficients: need at least three coefficients");
  if (sigma2.size() != alpha.rows())
    throw std::invalid_argument("project_coefficients: sigma2/alpha size mismatch");

  Eigen::MatrixXd out(alpha.rows(), p_eff);
  out.leftCols(k - 1) = alpha.leftCols(k - 1);
  for (Eigen::Index j = 0; j < alpha.rows(); ++j) {
    double gamma_prev = alpha(j, k - 2) - alpha(j, k - 3);
    double theta_prev = sigma2(j);
    double level = alpha(j, k - 2);
    for (int idx = k - 1; idx < p_eff; ++idx) {
      const PoolResult pooled = pool_step(gamma_prev, theta_prev, dist, overall_weight);
      const double gamma = pooled.mean + std::sqrt(pooled.variance) * rng.normal();
      level += gamma;
      out(j, idx) = level;
      gamma_prev = gamma;
      theta_prev = pooled.variance;
    }
  }
  return out;
}

Eigen::VectorXd psi_draws_at(const Eigen::MatrixXd& alpha, const CoefficientLayout& coeffs,
                             double t) {
  std::array<int, 4> cols;
  std::array<double, 4> w;
  int count;
  coeffs.weights_at(t, cols, w, count);
  Eigen::VectorXd psi = Eigen::VectorXd::Zero(alpha.rows());
  for (int c = 0; c < count; ++c)
    psi += w[static_cast<std::size_t>(c)] * alpha.col(cols[static_cast<std::size_t>(c)]);
  return psi;
}

TrajectorySummary trajectory(const Eigen::MatrixXd& alpha, const CoefficientLayout& coeffs,
                             const std::vector<double>& years) {
  TrajectorySummary out;
  out.years = years;
  out.median.reserve(years.size());
  out.lower90.reserve(years.size());
  out.upper90.reserve(years.size());
  for (double year : years) {
    const Eigen::VectorXd psi = psi_draws_at(alpha, coeffs, year);
    std::vector<double> rates(static_cast<std::size_t>(psi.size()));
    for (Eigen::Index j = 0; j < psi.size(); ++j)
      rates[static_cast<std::size_t>(j)] = std::exp(psi(j));
    const auto q = stats::posterior_summary(std::move(rates));
    out.lower90.push_back(q.lower);
    out.median.push_back(q.median);
    out.upper90.push_back(q.upper);
  }
  return out;
}

std::vector<double> median_first_differences(const Eigen::MatrixXd& alpha,
                                             const CoefficientLayout& coeffs) {
  std::vector<double> out;
  const auto& group = coeffs.merge().group;
  const int k_orig = coeffs.basis().n_obs;
  // gamma_k = alpha_k - alpha_{k-1} for 1-based k = 2..K-1, on the original
  // index grid; the last difference (involving alpha_K) is excluded.
  for (int korig = 1; korig + 1 < k_orig; ++korig) {
    const int a = group[static_cast<std::size_t>(korig)];
    const int b = group[static_cast<std::size_t>(korig - 1)];
    if (a == b) continue;  // structurally zero inside a merged conflict group
    std::vector<double> diffs(static_cast<std::size_t>(alpha.rows()));
    for (Eigen::Index j = 0; j < alpha.rows(); ++j)
      diffs[static_cast<std::size_t>(j)] = alpha(j, a) - alpha(j, b);
    out.push_back(stats::median(std::move(diffs)));
  }
  return out;
}

}  // namespace b3
