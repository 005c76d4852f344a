#include "b3/basis.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace b3 {

namespace {

Eigen::MatrixXd second_difference_matrix(int k) {
  Eigen::MatrixXd d = Eigen::MatrixXd::Zero(k - 2, k);
  for (int i = 0; i < k - 2; ++i) {
    d(i, i) = 1.0;
    d(i, i + 1) = -2.0;
    d(i, i + 2) = 1.0;
  }
  return d;
}

Eigen::MatrixXd difference_pseudoinverse(const Eigen::MatrixXd& d) {
  // A = D' (D D')^{-1}; D D' is a small SPD banded matrix.
  const Eigen::MatrixXd gram = d * d.transpose();
  return d.transpose() * gram.ldlt().solve(
                             Eigen::MatrixXd::Identity(gram.rows(), gram.cols()));
}

}  // namespace

std::vector<double> SplineBasis::anchor_knots() const {
  std::vector<double> out(static_cast<std::size_t>(n_total));
  for (int k = 0; k < n_total; ++k) out[static_cast<std::size_t>(k)] = center(k);
  return out;
}

SplineBasis make_basis(double first_obs_year, double last_obs_year,
                       double projection_end_year, double interval) {
  if (!(interval > 0.0)) throw std::invalid_argument("make_basis: interval must be > 0");
  if (!(first_obs_year < last_obs_year))
    throw std::invalid_argument("make_basis: first_obs_year must precede last_obs_year");
  if (last_obs_year - first_obs_year < interval)
    throw std::invalid_argument("make_basis: observation span shorter than one interval");
  if (projection_end_year < last_obs_year)
    throw std::invalid_argument("make_basis: projection horizon before the last observation");

  SplineBasis b;
  b.interval = interval;
  b.obs_start = first_obs_year;
  b.obs_end = last_obs_year;
  b.projection_end = projection_end_year;
  b.last_obs_center = last_obs_year + 1.5 * interval;

  // The leftmost anchor must land in (first - 2I, first - I] so that every
  // covering spline of the first observation exists and none is redundant.
  const double steps_left = (b.last_obs_center - (first_obs_year - interval)) / interval;
  const int n_left = static_cast<int>(std::ceil(steps_left - 1e-9));
  b.n_obs = n_left + 1;

  const double steps_right =
      (projection_end_year + interval - b.last_obs_center) / interval;
  const int n_right = std::max(0, static_cast<int>(std::ceil(steps_right - 1e-9)));
  b.n_total = b.n_obs + n_right;

  if (b.n_obs < 3)
    throw std::invalid_argument("make_basis: basis degenerates (fewer than 3 splines)");

  b.diff = second_difference_matrix(b.n_obs);
  b.diff_pinv = difference_pseudoinverse(b.diff);
  return b;
}

void eval_basis_local(const SplineBasis& basis, double t, int& first,
                      std::array<double, 4>& weights) {
  const double lo = basis.span_lo();
  const double hi = basis.span_hi();
  if (t < lo - 1e-9 || t > hi + 1e-9)
    throw std::out_of_range("eval_basis: t outside the basis span");
  t = std::clamp(t, lo, hi);

  // Extended uniform knot grid: xi_i = center(0) + (i - 2) * I, i = 0..P+3.
  // Spline k (0-based) is supported on [xi_k, xi_{k+4}).
  const double xi0 = basis.center(0) - 2.0 * basis.interval;
  const double u = (t - xi0) / basis.interval;
  int span = static_cast<int>(std::floor(u));
  span = std::clamp(span, 3, basis.n_total - 1);

  // Cox-de Boor, local form: weights of splines span-3 .. span on this cell.
  double left[4], right[4];
  double n[4] = {1.0, 0.0, 0.0, 0.0};
  for (int j = 1; j <= 3; ++j) {
    left[j] = t - (xi0 + (span + 1 - j) * basis.interval);
    right[j] = (xi0 + (span + j) * basis.interval) - t;
    double saved = 0.0;
    for (int r = 0; r < j; ++r) {
      const double temp = n[r] / (right[r + 1] + left[j - r]);
      n[r] = saved + right[r + 1] * temp;
      saved = left[j - r] * temp;
    }
    n[j] = saved;
  }
  first = span - 3;
  weights = {n[0], n[1], n[2], n[3]};
}

Eigen::VectorXd eval_basis(const SplineBasis& basis, double t) {
  int first;
  std::array<double, 4> w;
  eval_basis_local(basis, t, first, w);
  Eigen::VectorXd out = Eigen::VectorXd::Zero(basis.n_total);
  for (int j = 0; j < 4; ++j) {
    const int k = first + j;
    if (k >= 0 && k < basis.n_total) out(k) += w[static_cast<std::size_t>(j)];
  }
  return out;
}

Eigen::VectorXd reparam_to_alpha(const CoefficientReparam& rep, const SplineBasis& basis) {
  const int k = basis.n_obs;
  const int q = basis.second_diff_count();
  if (rep.eps.size() != q)
    throw std::invalid_argument("reparam_to_alpha: eps has wrong length");
  Eigen::VectorXd alpha = basis.diff_pinv * rep.eps;
  for (int i = 0; i < k; ++i)
    alpha(i) += rep.lambda0 + rep.lambda1 * ((i + 1) - 0.5 * k);
  return alpha;
}

SplineMerge identity_merge(int n_obs) {
  SplineMerge m;
  m.group.resize(static_cast<std::size_t>(n_obs));
  m.position.resize(static_cast<std::size_t>(n_obs));
  for (int i = 0; i < n_obs; ++i) {
    m.group[static_cast<std::size_t>(i)] = i;
    m.position[static_cast<std::size_t>(i)] = i + 1.0;
  }
  m.reduced_count = n_obs;
  return m;
}

SplineMerge merge_conflict_splines(const SplineBasis& basis,
                                   const std::vector<std::pair<double, double>>& periods) {
  if (periods.empty()) return identity_merge(basis.n_obs);

  auto sorted = periods;
  std::sort(sorted.begin(), sorted.end());
  for (std::size_t i = 0; i < sorted.size(); ++i) {
    const auto& [a, b] = sorted[i];
    if (!(a < b)) throw std::invalid_argument("merge_conflict_splines: empty period");
    if (a < basis.obs_start || b > basis.obs_end)
      throw std::invalid_argument("merge_conflict_splines: period outside observation span");
    if (i > 0 && sorted[i - 1].second > a)
      throw std::invalid_argument("merge_conflict_splines: overlapping periods");
  }

  SplineMerge m;
  m.group.resize(static_cast<std::size_t>(basis.n_obs));
  auto period_of = [&](double center) -> int {
    for (std::size_t p = 0; p < sorted.size(); ++p)
      if (center >= sorted[p].first && center <= sorted[p].second)
        return static_cast<int>(p);
    return -1;
  };

  int next = 0;
  int open_period = -1;
  double pos_sum = 0.0;
  int pos_n = 0;
  auto close_group = [&]() {
    if (pos_n > 0) m.position.push_back(pos_sum / pos_n);
    pos_sum = 0.0;
    pos_n = 0;
  };
  for (int k = 0; k < basis.n_obs; ++k) {
    const int p = period_of(basis.center(k));
    if (p >= 0 && p == open_period) {
      m.group[static_cast<std::size_t>(k)] = next - 1;
      pos_sum += k + 1.0;
      ++pos_n;
      continue;
    }
    close_group();
    m.group[static_cast<std::size_t>(k)] = next++;
    pos_sum = k + 1.0;
    pos_n = 1;
    open_period = p;
  }
  close_group();
  m.reduced_count = next;
  return m;
}

CoefficientLayout::CoefficientLayout(SplineBasis basis, SplineMerge merge)
    : basis_(std::move(basis)), merge_(std::move(merge)) {
  k_eff_ = merge_.reduced_count;
  p_eff_ = k_eff_ + (basis_.n_total - basis_.n_obs);
  q_eff_ = k_eff_ - 2;
  if (q_eff_ < 1)
    throw std::invalid_argument("CoefficientLayout: merging leaves fewer than 3 coefficients");

  centered_position_.resize(k_eff_);
  for (int j = 0; j < k_eff_; ++j)
    centered_position_(j) =
        merge_.position[static_cast<std::size_t>(j)] - 0.5 * basis_.n_obs;

  if (merge_.identity()) {
    diff_eff_ = basis_.diff;
    diff_pinv_eff_ = basis_.diff_pinv;
  } else {
    diff_eff_ = Eigen::MatrixXd::Zero(q_eff_, k_eff_);
    for (int i = 0; i < q_eff_; ++i) {
      diff_eff_(i, i) = 1.0;
      diff_eff_(i, i + 1) = -2.0;
      diff_eff_(i, i + 2) = 1.0;
    }
    const Eigen::MatrixXd gram = diff_eff_ * diff_eff_.transpose();
    diff_pinv_eff_ = diff_eff_.transpose() *
                     gram.ldlt().solve(Eigen::MatrixXd::Identity(q_eff_, q_eff_));
  }
}

void CoefficientLayout::weights_at(double t, std::array<int, 4>& cols,
                                   std::array<double, 4>& w, int& count) const {
  int first;
  std::array<double, 4> raw;
  eval_basis_local(basis_, t, first, raw);
  count = 0;
  for (int j = 0; j < 4; ++j) {
    const int orig = first + j;
    if (orig < 0 || orig >= basis_.n_total) continue;
    const int eff = orig < basis_.n_obs
                        ? merge_.group[static_cast<std::size_t>(orig)]
                        : k_eff_ + (orig - basis_.n_obs);
    bool added = false;
    for (int c = 0; c < count; ++c) {
      if (cols[static_cast<std::size_t>(c)] == eff) {
        w[static_cast<std::size_t>(c)] += raw[static_cast<std::size_t>(j)];
        added = true;
        break;
      }
    }
    if (!added) {
      cols[static_cast<std::size_t>(count)] = eff;
      w[static_cast<std::size_t>(count)] = raw[static_cast<std::size_t>(j)];
      ++count;
    }
  }
}

Eigen::VectorXd CoefficientLayout::weight_row(double t) const {
  std::array<int, 4> cols;
  std::array<double, 4> w;
  int count;
  weights_at(t, cols, w, count);
  Eigen::VectorXd row = Eigen::VectorXd::Zero(p_eff_);
  for (int c = 0; c < count; ++c)
    row(cols[static_cast<std::size_t>(c)]) += w[static_cast<std::size_t>(c)];
  return row;
}

Eigen::VectorXd CoefficientLayout::alpha_eff(double lambda0, double lambda1,
                                             const Eigen::VectorXd& eps) const {
  if (eps.size() != q_eff_)
    throw std::invalid_argument("alpha_eff: eps has wrong length");
  Eigen::VectorXd alpha = diff_pinv_eff_ * eps;
  alpha += Eigen::VectorXd::Constant(k_eff_, lambda0);
  alpha += lambda1 * centered_position_;
  return alpha;
}

}  // namespace b3
