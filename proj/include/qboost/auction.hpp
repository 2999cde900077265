#ifndef QBOOST_AUCTION_HPP
#define QBOOST_AUCTION_HPP

#include <qboost/types.hpp>

#include <algorithm>
#include <limits>
#include <optional>
#include <vector>

namespace qboost {

/// Everything the auctioneer sees at one tick. Qualities are already in
/// money, budgets are what remains at the start of the tick.
struct TickState {
  Matrix values;      // v_{i,j}
  Matrix qualities;   // q_{i,j}
  Vector budgets;     // remaining B_i
  Vector rois;        // ROI_i
  Matrix conv_prob;   // conversion probability per (i, j)
  int tick = 0;
  int horizon = 1;

  Index advertisers() const { return values.rows(); }
  Index impressions() const { return values.cols(); }

  void validate() const {
    const Index n = advertisers();
    const Index m = impressions();
    detail::require_shape(qualities, n, m, "qualities");
    detail::require_shape(conv_prob, n, m, "conv_prob");
    detail::require(budgets.size() == n, "shape mismatch: budgets");
    detail::require(rois.size() == n, "shape mismatch: rois");
    detail::require(detail::all_finite(values) && (values.array() >= 0).all(),
                    "values must be finite and >= 0");
    detail::require(
        detail::all_finite(qualities) && (qualities.array() >= 0).all(),
        "qualities must be finite and >= 0");
    detail::require((budgets.array() >= 0).all(), "budgets must be >= 0");
    detail::require(
        (conv_prob.array() >= 0).all() && (conv_prob.array() <= 1).all(),
        "conv_prob must lie in [0, 1]");
    detail::require(horizon > 0 && tick >= 0 && tick < horizon,
                    "tick must satisfy 0 <= tick < horizon");
  }
};

struct AuctionOutcome {
  Matrix alloc;                              // x_{i,j} in {0, 1}
  Matrix payments;                           // p_{i,j}
  std::vector<std::optional<Index>> winners;  // per impression
  Vector second_scores;                      // second-highest composite score
};

struct Welfare {
  double liquid = 0.0;
  double quality = 0.0;
  double total = 0.0;
  double revenue = 0.0;
};

namespace detail {

struct Ranking {
  std::optional<Index> best;
  double second = 0.0;
};

// Highest composite score among eligible advertisers, lowest index on ties.
// The runner-up score is 0 when fewer than two advertisers are eligible.
inline Ranking rank_column(const Matrix& scores, Index j,
                           const std::vector<char>& eligible) {
  Ranking out;
  double best = -std::numeric_limits<double>::infinity();
  double second = -std::numeric_limits<double>::infinity();
  for (Index i = 0; i < scores.rows(); ++i) {
    if (!eligible[static_cast<std::size_t>(i)]) continue;
    const double s = scores(i, j);
    if (!out.best || s > best) {
      second = best;
      best = s;
      out.best = i;
    } else if (s > second) {
      second = s;
    }
  }
  out.second = std::isfinite(second) ? second : 0.0;
  return out;
}

}  // namespace detail

/// Single-slot second-price auction on composite score b + q + z.
///
/// Impressions are cleared in column order against a running copy of the
/// budgets. An advertiser whose remaining budget cannot cover its would-be
/// payment drops out of that impression and the column is re-ranked.
inline AuctionOutcome run_auction(const TickState& state, const Matrix& bids,
                                  const Matrix& boosts) {
  const Index n = state.advertisers();
  const Index m = state.impressions();
  detail::require_shape(bids, n, m, "bids");
  detail::require_shape(boosts, n, m, "boosts");
  detail::require_shape(state.qualities, n, m, "qualities");
  detail::require(state.budgets.size() == n, "shape mismatch: budgets");
  detail::require(detail::all_finite(bids), "bids must be finite");
  detail::require(detail::all_finite(boosts), "boosts must be finite");
  if ((bids.array() < 0).any()) throw ValidationError("negative bid");

  const Matrix scores = bids + state.qualities + boosts;

  AuctionOutcome out;
  out.alloc = Matrix::Zero(n, m);
  out.payments = Matrix::Zero(n, m);
  out.winners.assign(static_cast<std::size_t>(m), std::nullopt);
  out.second_scores = Vector::Zero(m);

  Vector remaining = state.budgets;
  for (Index j = 0; j < m; ++j) {
    std::vector<char> eligible(static_cast<std::size_t>(n), 1);
    while (true) {
      const detail::Ranking r = detail::rank_column(scores, j, eligible);
      if (!r.best) break;
      const Index w = *r.best;
      const double pay =
          std::max(0.0, r.second - state.qualities(w, j) - boosts(w, j));
      if (pay > remaining(w)) {
        eligible[static_cast<std::size_t>(w)] = 0;
        continue;
      }
      out.alloc(w, j) = 1.0;
      out.payments(w, j) = pay;
      out.winners[static_cast<std::size_t>(j)] = w;
      out.second_scores(j) = r.second;
      remaining(w) -= pay;
      break;
    }
  }
  return out;
}

/// Liquid, quality and total welfare plus revenue of an outcome. The liquid
/// term caps each advertiser's won value at its budget from the tick start.
inline Welfare welfare(const TickState& state, const AuctionOutcome& outcome) {
  const Index n = state.advertisers();
  const Index m = state.impressions();
  detail::require_shape(outcome.alloc, n, m, "alloc");
  detail::require_shape(outcome.payments, n, m, "payments");

  Welfare w;
  for (Index i = 0; i < n; ++i) {
    const double won = (state.values.row(i).array() *
                        outcome.alloc.row(i).array()).sum();
    w.liquid += std::min(state.budgets(i), won);
  }
  w.quality = (state.qualities.array() * outcome.alloc.array()).sum();
  w.total = w.liquid + w.quality;
  w.revenue = outcome.payments.sum();
  return w;
}

/// Smallest bid-to-value ratio over pairs with positive value.
inline double min_bid_ratio(const Matrix& bids, const Matrix& values) {
  detail::require_shape(bids, values.rows(), values.cols(), "bids");
  double gamma = std::numeric_limits<double>::infinity();
  bool any = false;
  for (Index j = 0; j < values.cols(); ++j) {
    for (Index i = 0; i < values.rows(); ++i) {
      if (values(i, j) > 0) {
        gamma = std::min(gamma, bids(i, j) / values(i, j));
        any = true;
      }
    }
  }
  if (!any) throw ValidationError("gamma undefined: all values are zero");
  return gamma;
}

/// Per-impression greedy optimum of v + q with budget caps ignored.
inline double optimal_welfare(const TickState& state) {
  if (state.advertisers() == 0) return 0.0;
  const Matrix r = state.values + state.qualities;
  return r.colwise().maxCoeff().sum();
}

}  // namespace qboost

#endif  // QBOOST_AUCTION_HPP
