#pragma once

#include <Eigen/Dense>
#include <array>
#include <utility>
#include <vector>

namespace b3 {

/// Cubic B-spline basis on equally spaced knots. Spline k is anchored at the
/// knot in the middle of its support: it is nonzero on (center_k - 2I,
/// center_k + 2I). The grid is placed so that the anchor of the last
/// observation-period spline sits at t_last + 1.5*I, which leaves that spline
/// nonzero for only half an interval (1.25 years at I = 2.5) of data.
struct SplineBasis {
  double interval = 2.5;       // I
  double last_obs_center = 0;  // anchor knot of spline K (= t_last + 1.5*I)
  int n_obs = 0;               // K: splines nonzero during the observation period
  int n_total = 0;             // P: including the projection horizon
  double obs_start = 0;
  double obs_end = 0;
  double projection_end = 0;

  Eigen::MatrixXd diff;       // D: (K-2) x K second-order difference matrix
  Eigen::MatrixXd diff_pinv;  // A = D' (D D')^{-1}: K x (K-2); D * A = I

  int second_diff_count() const { return n_obs - 2; }  // Q

  /// Anchor knot of spline k (0-based); exact at k = n_obs - 1.
  double center(int k) const {
    return last_obs_center + (k - (n_obs - 1)) * interval;
  }
  std::vector<double> anchor_knots() const;

  /// Range over which all four covering splines exist.
  double span_lo() const { return center(0) + interval; }
  double span_hi() const { return center(n_total - 1) - interval; }
};

/// Build the basis for one country. Throws std::invalid_argument when the
/// observation span is shorter than one interval.
SplineBasis make_basis(double first_obs_year, double last_obs_year,
                       double projection_end_year, double interval = 2.5);

/// Weights of all n_total splines at t (at most four are nonzero, they are
/// nonnegative and sum to one). Throws std::out_of_range outside the span.
Eigen::VectorXd eval_basis(const SplineBasis& basis, double t);

/// Fast path: index of the first covering spline plus its four weights
/// (trailing entries are zero at knots and near the right edge).
void eval_basis_local(const SplineBasis& basis, double t, int& first,
                      std::array<double, 4>& weights);

/// Level/slope/second-difference parameterization of the spline coefficients.
struct CoefficientReparam {
  double lambda0 = 0.0;  // level
  double lambda1 = 0.0;  // slope per knot index
  Eigen::VectorXd eps;   // Q second differences
};

/// alpha_k = lambda0 + lambda1 (k - K/2) + [A eps]_k for 1-based k; the second
/// differences of the result reproduce eps exactly.
Eigen::VectorXd reparam_to_alpha(const CoefficientReparam& rep, const SplineBasis& basis);

/// Mapping from original spline indices onto a reduced coefficient set where
/// all splines anchored inside one conflict period share a coefficient.
struct SplineMerge {
  std::vector<int> group;        // size K: original index -> reduced index
  std::vector<double> position;  // size K_eff: mean original 1-based index
  int reduced_count = 0;         // K_eff

  bool identity() const { return reduced_count == static_cast<int>(group.size()); }
};

SplineMerge identity_merge(int n_obs);

/// Throws std::invalid_argument on overlapping periods or periods outside the
/// observation span.
SplineMerge merge_conflict_splines(const SplineBasis& basis,
                                   const std::vector<std::pair<double, double>>& periods);

/// Basis plus merge, the coefficient space the model actually samples.
/// Projection-period splines are never merged; effective coefficient j >= K_eff
/// maps to original spline K + (j - K_eff).
class CoefficientLayout {
 public:
  CoefficientLayout() = default;
  CoefficientLayout(SplineBasis basis, SplineMerge merge);

  const SplineBasis& basis() const { return basis_; }
  const SplineMerge& merge() const { return merge_; }
  int k_eff() const { return k_eff_; }
  int p_eff() const { return p_eff_; }
  int q_eff() const { return q_eff_; }

  /// Centered position multiplying lambda1 (original-K centering).
  const Eigen::VectorXd& centered_position() const { return centered_position_; }
  const Eigen::MatrixXd& diff_eff() const { return diff_eff_; }
  const Eigen::MatrixXd& diff_pinv_eff() const { return diff_pinv_eff_; }

  /// Effective-coefficient weights at t: w[i] applies to coefficient col[i].
  /// Duplicate effective columns from merged groups are accumulated.
  void weights_at(double t, std::array<int, 4>& cols, std::array<double, 4>& w,
                  int& count) const;

  /// Dense row of effective weights (length p_eff).
  Eigen::VectorXd weight_row(double t) const;

  /// Observation-period coefficients from the level/slope/eps parameterization.
  Eigen::VectorXd alpha_eff(double lambda0, double lambda1,
                            const Eigen::VectorXd& eps) const;

 private:
  SplineBasis basis_;
  SplineMerge merge_;
  int k_eff_ = 0, p_eff_ = 0, q_eff_ = 0;
  Eigen::VectorXd centered_position_;
  Eigen::MatrixXd diff_eff_, diff_pinv_eff_;
};

}  // namespace b3
