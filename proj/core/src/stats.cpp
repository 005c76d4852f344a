#include "b3/stats.hpp"

#include <algorithm>
#include <limits>
#include <stdexcept>

namespace b3::stats {

namespace {

// Acklam's coefficients for the inverse normal CDF.
constexpr double kA[6] = {-3.969683028665376e+01, 2.209460984245205e+02,
                          -2.759285104469687e+02, 1.383577518672690e+02,
                          -3.066479806614716e+01, 2.506628277459239e+00};
constexpr double kB[5] = {-5.447609879822406e+01, 1.615858368580409e+02,
                          -1.556989798598866e+02, 6.680131188771972e+01,
                          -1.328068155288572e+01};
constexpr double kC[6] = {-7.784894002430293e-03, -3.223964580411365e-01,
                          -2.400758277161838e+00, -2.549732539343734e+00,
                          4.374664141464968e+00,  2.938163982698783e+00};
constexpr double kD[4] = {7.784695709041462e-03, 3.224671290700398e-01,
                          2.445134137142996e+00, 3.754408661907416e+00};

double acklam(double p) {
  constexpr double plow = 0.02425;
  if (p < plow) {
    const double q = std::sqrt(-2.0 * std::log(p));
    return (((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q + kC[5]) /
           ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  }
  if (p > 1.0 - plow) {
    const double q = std::sqrt(-2.0 * std::log(1.0 - p));
    return -(((((kC[0] * q + kC[1]) * q + kC[2]) * q + kC[3]) * q + kC[4]) * q + kC[5]) /
           ((((kD[0] * q + kD[1]) * q + kD[2]) * q + kD[3]) * q + 1.0);
  }
  const double q = p - 0.5;
  const double r = q * q;
  return (((((kA[0] * r + kA[1]) * r + kA[2]) * r + kA[3]) * r + kA[4]) * r + kA[5]) * q /
         (((((kB[0] * r + kB[1]) * r + kB[2]) * r + kB[3]) * r + kB[4]) * r + 1.0);
}

}  // namespace

double normal_quantile(double p) {
  if (!(p > 0.0 && p < 1.0)) {
    if (p == 0.0) return -std::numeric_limits<double>::infinity();
    if (p == 1.0) return std::numeric_limits<double>::infinity();
    throw std::domain_error("normal_quantile: p outside [0,1]");
  }
  double x = acklam(p);
  // One Halley refinement against the erfc-based CDF.
  const double e = normal_cdf(x) - p;
  const double u = e * std::sqrt(2.0 * M_PI) * std::exp(0.5 * x * x);
  x -= u / (1.0 + 0.5 * x * u);
  return x;
}

namespace {

// Marginal truncated-exponential sampler for the far upper tail: given
// standardized bounds a < b with a large, the conditional density is close to
// proportional to exp(-a (z - a)) on (a, b).
double tail_sample(Rng& rng, double a, double b) {
  const double rate = std::max(a, 1.0);
  const double u = rng.uniform();
  if (std::isinf(b)) return a - std::log1p(-u) / rate;
  const double cap = -std::expm1(-rate * (b - a));
  return a - std::log1p(-u * cap) / rate;
}

}  // namespace

double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi) {
  if (!(lo < hi)) throw std::invalid_argument("truncated_normal: empty interval");
  const double a = std::isinf(lo) ? lo : (lo - mean) / sd;
  const double b = std::isinf(hi) ? hi : (hi - mean) / sd;

  constexpr double kTail = 7.0;
  if (a >= kTail) return mean + sd * tail_sample(rng, a, b);
  if (b <= -kTail) return mean - sd * tail_sample(rng, -b, -a);

  const double pa = std::isinf(a) ? 0.0 : normal_cdf(a);
  const double pb = std::isinf(b) ? 1.0 : normal_cdf(b);
  if (pb - pa < 1e-14) {
    // Numerically empty window in the bulk: both bounds nearly coincide.
    const double mid = 0.5 * ((std::isinf(a) ? b : a) + (std::isinf(b) ? a : b));
    return mean + sd * mid;
  }
  const double u = pa + (pb - pa) * rng.uniform();
  double z = normal_quantile(u);
  z = std::min(std::max(z, a), b);
  return mean + sd * z;
}

double quantile_type7(std::vector<double> values, double p) {
  if (values.empty()) throw std::invalid_argument("quantile of empty sample");
  std::sort(values.begin(), values.end());
  const double h = (static_cast<double>(values.size()) - 1.0) * p;
  const auto lo = static_cast<std::size_t>(std::floor(h));
  if (lo + 1 >= values.size()) return values.back();
  const double frac = h - static_cast<double>(lo);
  return values[lo] + frac * (values[lo + 1] - values[lo]);
}

double median(std::vector<double> values) { return quantile_type7(std::move(values), 0.5); }

double variance(const std::vector<double>& values) {
  if (values.size() < 2) throw std::invalid_argument("variance needs >= 2 values");
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return ss / (static_cast<double>(values.size()) - 1.0);
}

QuantileSummary posterior_summary(std::vector<double> draws, double p_lower, double p_upper) {
  if (draws.empty()) throw std::invalid_argument("posterior_summary of empty sample");
  std::sort(draws.begin(), draws.end());
  auto at = [&](double p) {
    const double h = (static_cast<double>(draws.size()) - 1.0) * p;
    const auto lo = static_cast<std::size_t>(std::floor(h));
    if (lo + 1 >= draws.size()) return draws.back();
    return draws[lo] + (h - static_cast<double>(lo)) * (draws[lo + 1] - draws[lo]);
  };
  return QuantileSummary{at(p_lower), at(0.5), at(p_upper)};
}

double poisson(Rng& rng, double mean) {
  if (!(mean >= 0.0)) throw std::invalid_argument("poisson: mean must be >= 0");
  if (mean == 0.0) return 0.0;
  if (mean < 30.0) {
    const double limit = std::exp(-mean);
    double p = 1.0;
    double k = 0.0;
    do {
      k += 1.0;
      p *= rng.uniform();
    } while (p > limit);
    return k - 1.0;
  }
  // PTRS transformed rejection.
  const double b = 0.931 + 2.53 * std::sqrt(mean);
  const double a = -0.059 + 0.02483 * b;
  const double inv_alpha = 1.1239 + 1.1328 / (b - 3.4);
  const double v_r = 0.9277 - 3.6224 / (b - 2.0);
  const double log_mu = std::log(mean);
  for (;;) {
    const double u = rng.uniform() - 0.5;
    const double v = rng.uniform();
    const double us = 0.5 - std::abs(u);
    const double k = std::floor((2.0 * a / us + b) * u + mean + 0.43);
    if (us >= 0.07 && v <= v_r) return k;
    if (k < 0.0 || (us < 0.013 && v > us)) continue;
    if (std::log(v * inv_alpha / (a / (us * us) + b)) <=
        k * log_mu - mean - std::lgamma(k + 1.0))
      return k;
  }
}

double ks_statistic_uniform(std::vector<double> draws, double a, double b) {
  std::sort(draws.begin(), draws.end());
  const auto n = static_cast<double>(draws.size());
  double d = 0.0;
  for (std::size_t i = 0; i < draws.size(); ++i) {
    const double f = std::clamp((draws[i] - a) / (b - a), 0.0, 1.0);
    d = std::max(d, std::abs(f - static_cast<double>(i) / n));
    d = std::max(d, std::abs(static_cast<double>(i + 1) / n - f));
  }
  return d;
}

double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b) {
  std::sort(a.begin(), a.end());
  std::sort(b.begin(), b.end());
  const auto na = static_cast<double>(a.size());
  const auto nb = static_cast<double>(b.size());
  double d = 0.0;
  std::size_t i = 0, j = 0;
  while (i < a.size() && j < b.size()) {
    if (a[i] <= b[j])
      ++i;
    else
      ++j;
    d = std::max(d, std::abs(static_cast<double>(i) / na - static_cast<double>(j) / nb));
  }
  const double ne = std::sqrt(na * nb / (na + nb));
  const double lambda = (ne + 0.12 + 0.11 / ne) * d;
  double p = 0.0;
  for (int k = 1; k <= 100; ++k) {
    p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
  }
  return std::clamp(p, 0.0, 1.0);
}

}  // namespace b3::stats
