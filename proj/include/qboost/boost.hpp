#ifndef QBOOST_BOOST_HPP
#define QBOOST_BOOST_HPP

#include <qboost/types.hpp>

#include <algorithm>
#include <numeric>
#include <vector>

namespace qboost {

/// Per-(advertiser, impression) additive boosts.
struct BoostMatrix {
  Matrix z;
};

/// Smallest increment multiplier that guarantees efficiency at least `eta`
/// for bidders whose minimum bid-to-value ratio is `gamma`. Clamped at 0.
inline double competitive_factor(double eta, double gamma) {
  if (!(eta >= 0.0 && eta < 1.0)) {
    throw ValidationError("eta must lie in [0, 1)");
  }
  if (!(gamma >= 0.0)) throw ValidationError("gamma must be >= 0");
  const double base = 1.0 / (1.0 - eta);
  const double c = gamma >= 1.0 ? base - 2.0 : base - gamma - 1.0;
  return std::max(0.0, c);
}

/// Welfare approximation ratio guaranteed by a c-competitive boost.
inline double efficiency_bound(double c, double gamma) {
  detail::require(c >= 0.0 && gamma >= 0.0, "c and gamma must be >= 0");
  if (gamma >= 1.0) return (c + 1.0) / (c + 2.0);
  return (c + gamma) / (c + gamma + 1.0);
}

/// Advertiser indices of column `j` sorted by v + q ascending, stable so
/// that equal sums keep index order.
inline std::vector<Index> rank_by_value_quality(const Matrix& vq, Index j) {
  std::vector<Index> order(static_cast<std::size_t>(vq.rows()));
  std::iota(order.begin(), order.end(), Index{0});
  std::stable_sort(order.begin(), order.end(), [&](Index a, Index b) {
    return vq(a, j) < vq(b, j);
  });
  return order;
}

inline bool is_c_competitive(const Matrix& z, const Matrix& values,
                             const Matrix& qualities, double c,
                             double tol = 1e-9) {
  detail::require_shape(values, z.rows(), z.cols(), "values");
  detail::require_shape(qualities, z.rows(), z.cols(), "qualities");
  if ((z.array() < -tol).any()) return false;
  const Matrix vq = values + qualities;
  for (Index j = 0; j < z.cols(); ++j) {
    const auto order = rank_by_value_quality(vq, j);
    if (order.empty()) continue;
    if (std::abs(z(order[0], j)) > tol) return false;
    for (std::size_t k = 1; k < order.size(); ++k) {
      const Index cur = order[k];
      const Index prev = order[k - 1];
      const double need = c * (vq(cur, j) - vq(prev, j));
      if (z(cur, j) - z(prev, j) < need - tol) return false;
    }
  }
  return true;
}

/// Sequential lift onto the c-competitive set.
///
/// Per impression, walks advertisers in ascending v + q. The lowest gets 0;
/// every later entry is kept if it clears its predecessor (already lifted)
/// by c times the v + q gap, otherwise it is raised to exactly that.
/// Finishes with an elementwise max(z, 0).
inline BoostMatrix project(const Matrix& raw, const Matrix& values,
                           const Matrix& qualities, double c) {
  detail::require_shape(values, raw.rows(), raw.cols(), "values");
  detail::require_shape(qualities, raw.rows(), raw.cols(), "qualities");
  detail::require(detail::all_finite(raw), "raw boosts must be finite");
  detail::require(c >= 0.0, "c must be >= 0");

  const Matrix vq = values + qualities;
  Matrix z = raw;
  for (Index j = 0; j < z.cols(); ++j) {
    const auto order = rank_by_value_quality(vq, j);
    if (order.empty()) continue;
    z(order[0], j) = 0.0;
    for (std::size_t k = 1; k < order.size(); ++k) {
      const Index cur = order[k];
      const Index prev = order[k - 1];
      const double inc = c * (vq(cur, j) - vq(prev, j));
      if (z(cur, j) - z(prev, j) < inc) z(cur, j) = z(prev, j) + inc;
    }
  }
  return BoostMatrix{z.cwiseMax(0.0)};
}

/// Vector-Jacobian product of `project` at `raw`.
///
/// Kept entries pass their gradient to their own raw slot. Lifted entries
/// hand it to the predecessor in rank order, so a lift chain accumulates
/// onto the raw slot where it started. The lowest-ranked slot is overwritten
/// with 0 and never receives gradient. A tie between keeping and lifting
/// counts as lifted.
inline Matrix project_vjp(const Matrix& raw, const Matrix& values,
                          const Matrix& qualities, double c,
                          const Matrix& upstream) {
  detail::require_shape(values, raw.rows(), raw.cols(), "values");
  detail::require_shape(qualities, raw.rows(), raw.cols(), "qualities");
  detail::require_shape(upstream, raw.rows(), raw.cols(), "upstream");
  detail::require(c >= 0.0, "c must be >= 0");

  const Matrix vq = values + qualities;
  Matrix grad = Matrix::Zero(raw.rows(), raw.cols());
  const auto n = static_cast<std::size_t>(raw.rows());
  std::vector<double> lifted_val(n);
  std::vector<char> lifted(n);
  std::vector<double> g(n);

  for (Index j = 0; j < raw.cols(); ++j) {
    const auto order = rank_by_value_quality(vq, j);
    if (order.empty()) continue;
    // Replay the forward pass in rank coordinates.
    lifted_val[0] = 0.0;
    lifted[0] = 1;
    for (std::size_t k = 1; k < n; ++k) {
      const double inc = c * (vq(order[k], j) - vq(order[k - 1], j));
      const double kept = raw(order[k], j);
      if (kept - lifted_val[k - 1] <= inc) {
        lifted_val[k] = lifted_val[k - 1] + inc;
        lifted[k] = 1;
      } else {
        lifted_val[k] = kept;
        lifted[k] = 0;
      }
    }
    for (std::size_t k = 0; k < n; ++k) {
      g[k] = lifted_val[k] >= 0.0 ? upstream(order[k], j) : 0.0;
    }
    for (std::size_t k = n - 1; k >= 1; --k) {
      if (lifted[k]) {
        g[k - 1] += g[k];
      } else {
        grad(order[k], j) = g[k];
      }
    }
  }
  return grad;
}

}  // namespace qboost

#endif  // QBOOST_BOOST_HPP
