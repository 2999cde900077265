#ifndef QBOOST_SURROGATE_HPP
#define QBOOST_SURROGATE_HPP

#include <qboost/types.hpp>

#include <cmath>

namespace qboost {

struct SoftAssignment {
  Matrix sigma;  // column-wise softmax of composite scores
  double tau = 1.0;
};

struct SoftWelfare {
  double value = 0.0;
  SoftAssignment assignment;
};

namespace detail {

inline void check_surrogate_inputs(const Matrix& bids, const Matrix& q,
                                   const Matrix& z, const Matrix& v,
                                   double tau) {
  if (!(tau > 0.0)) throw ValidationError("tau must be > 0");
  require_shape(q, bids.rows(), bids.cols(), "qualities");
  require_shape(z, bids.rows(), bids.cols(), "boosts");
  require_shape(v, bids.rows(), bids.cols(), "values");
}

inline Matrix column_softmax(const Matrix& scores, double tau) {
  Matrix sigma(scores.rows(), scores.cols());
  for (Index j = 0; j < scores.cols(); ++j) {
    if (scores.rows() == 0) continue;
    const double top = scores.col(j).maxCoeff();
    sigma.col(j) = ((scores.col(j).array() - top) / tau).exp();
    sigma.col(j) /= sigma.col(j).sum();
  }
  return sigma;
}

}  // namespace detail

/// Temperature-tau softmax relaxation of the winner-take-all welfare:
/// sum over impressions of the sigma-weighted v + q.
inline SoftWelfare soft_welfare(const Matrix& bids, const Matrix& q,
                                const Matrix& z, const Matrix& v,
                                double tau) {
  detail::check_surrogate_inputs(bids, q, z, v, tau);
  SoftWelfare out;
  out.assignment.tau = tau;
  out.assignment.sigma = detail::column_softmax(bids + q + z, tau);
  out.value = (out.assignment.sigma.array() * (v + q).array()).sum();
  return out;
}

/// d soft_welfare / d z = sigma * (r - E_sigma[r]) / tau, with r = v + q.
inline Matrix soft_welfare_grad_z(const Matrix& bids, const Matrix& q,
                                  const Matrix& z, const Matrix& v,
                                  double tau) {
  detail::check_surrogate_inputs(bids, q, z, v, tau);
  const Matrix sigma = detail::column_softmax(bids + q + z, tau);
  const Matrix r = v + q;
  Matrix grad(r.rows(), r.cols());
  for (Index j = 0; j < r.cols(); ++j) {
    const double mean = sigma.col(j).dot(r.col(j));
    grad.col(j) =
        sigma.col(j).array() * (r.col(j).array() - mean) / tau;
  }
  return grad;
}

/// Upper bound 2 m tau ln n on hard minus soft welfare.
inline double surrogate_gap_bound(Index m, Index n, double tau) {
  detail::require(m >= 1 && n >= 1, "m and n must be >= 1");
  detail::require(tau > 0.0, "tau must be > 0");
  return 2.0 * static_cast<double>(m) * tau *
         std::log(static_cast<double>(n));
}

}  // namespace qboost

#endif  // QBOOST_SURROGATE_HPP
