#pragma once

#include <cmath>
#include <vector>

#include "b3/rng.hpp"

namespace b3::stats {

inline constexpr double kLogSqrt2Pi = 0.918938533204672741780329736406;

inline double log_normal_pdf(double x, double mean, double sd) {
  const double z = (x - mean) / sd;
  return -kLogSqrt2Pi - std::log(sd) - 0.5 * z * z;
}

/// Normalizing constant of the location-scale t density, everything that does
/// not depend on the evaluation point: lgamma((nu+1)/2) - lgamma(nu/2) - log(sqrt(nu*pi)).
inline double t_log_norm_const(double dof) {
  return std::lgamma(0.5 * (dof + 1.0)) - std::lgamma(0.5 * dof) -
         0.5 * std::log(dof * M_PI);
}

inline double log_t_pdf_given_const(double norm_const, double x, double dof,
                                    double location, double scale) {
  const double z = (x - location) / scale;
  return norm_const - std::log(scale) - 0.5 * (dof + 1.0) * std::log1p(z * z / dof);
}

/// Location-scale t: the scale multiplies a standard t variate.
inline double log_t_pdf(double x, double dof, double location, double scale) {
  return log_t_pdf_given_const(t_log_norm_const(dof), x, dof, location, scale);
}

inline double normal_cdf(double z) { return 0.5 * std::erfc(-z * M_SQRT1_2); }

/// Inverse standard normal CDF (Acklam's rational approximation polished with
/// one Halley step); |error| < 1e-15 over (1e-300, 1 - 1e-16).
double normal_quantile(double p);

/// Inverse-CDF sampler for N(mean, sd^2) restricted to (lo, hi). Either bound
/// may be infinite. Falls back to a truncated-exponential tail sampler when
/// the interval probability underflows.
double truncated_normal(Rng& rng, double mean, double sd, double lo, double hi);

/// Quantile with linear interpolation between order statistics (type 7).
double quantile_type7(std::vector<double> values, double p);

/// Median / unbiased variance of a sample.
double median(std::vector<double> values);
double variance(const std::vector<double>& values);

struct QuantileSummary {
  double lower = 0.0;   // 5th percentile
  double median = 0.0;  // 50th
  double upper = 0.0;   // 95th
};

/// 5/50/95 percentiles, the reporting convention used throughout.
QuantileSummary posterior_summary(std::vector<double> draws, double p_lower = 0.05,
                                  double p_upper = 0.95);

/// Poisson draw (Knuth below mean 30, Hormann's PTRS transformed rejection
/// above); deterministic given the rng stream.
double poisson(Rng& rng, double mean);

/// Kolmogorov-Smirnov distance between the sample and U(a, b).
double ks_statistic_uniform(std::vector<double> draws, double a, double b);

/// Asymptotic two-sample Kolmogorov-Smirnov p-value.
double ks_two_sample_pvalue(std::vector<double> a, std::vector<double> b);

}  // namespace b3::stats
