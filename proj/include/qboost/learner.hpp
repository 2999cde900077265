#ifndef QBOOST_LEARNER_HPP
#define QBOOST_LEARNER_HPP

#include <qboost/auction.hpp>
#include <qboost/boost.hpp>
#include <qboost/episode.hpp>
#include <qboost/net.hpp>
#include <qboost/surrogate.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <deque>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace qboost {

struct TrainConfig {
  int episodes = 50;
  double lr = 1e-4;
  double tau = 0.1;
  double l2_lambda = 100.0;
  double clip_norm = 1.0;
  double eta = 0.75;
  double dropout_p = 0.2;
  int batch_cap = 256;  // feature rows per optimizer step
  int lr_patience = 5;
  int stop_patience = 30;
  double lr_factor = 0.5;
  bool use_projection = true;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(episodes >= 0, "episodes must be >= 0");
    detail::require(lr > 0 && tau > 0 && l2_lambda >= 0 && clip_norm >= 0,
                    "lr, tau must be > 0; l2_lambda, clip_norm >= 0");
    detail::require(eta > 0 && eta < 1, "eta must lie in (0, 1)");
    detail::require(dropout_p >= 0 && dropout_p < 1,
                    "dropout_p must lie in [0, 1)");
    detail::require(batch_cap > 0, "batch_cap must be > 0");
  }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    TrainConfig, episodes, lr, tau, l2_lambda, clip_norm, eta, dropout_p,
    batch_cap, lr_patience, stop_patience, lr_factor, use_projection, seed)

struct TickMetrics {
  int tick = 0;
  double welfare = 0.0;
  double opt_welfare = 0.0;
  double cum_ratio = 0.0;
  double revenue = 0.0;
  double loss = 0.0;
  double grad_norm_sq = 0.0;
  double gamma = 1.0;
  double c = 0.0;
};

struct EpisodeMetrics {
  std::string policy;
  int episode = 0;
  std::vector<TickMetrics> ticks;
  double daily_welfare = 0.0;
  double daily_revenue = 0.0;
  double mean_grad_norm = 0.0;
  double mean_loss = 0.0;

  double final_cum_ratio() const {
    return ticks.empty() ? 0.0 : ticks.back().cum_ratio;
  }
};

enum class Policy { qboost, none, uniform_vq, uniform_v, myerson_vq, myerson_v };

inline constexpr double kUniformBoostFactor = 0.2;

inline Policy parse_policy(const std::string& id) {
  if (id == "qboost") return Policy::qboost;
  if (id == "none") return Policy::none;
  if (id == "uniform_vq") return Policy::uniform_vq;
  if (id == "uniform_v") return Policy::uniform_v;
  if (id == "myerson_vq") return Policy::myerson_vq;
  if (id == "myerson_v") return Policy::myerson_v;
  throw ValidationError("unknown policy '" + id + "'");
}

inline std::string policy_name(Policy p) {
  switch (p) {
    case Policy::qboost: return "qboost";
    case Policy::none: return "none";
    case Policy::uniform_vq: return "uniform_vq";
    case Policy::uniform_v: return "uniform_v";
    case Policy::myerson_vq: return "myerson_vq";
    case Policy::myerson_v: return "myerson_v";
  }
  return "unknown";
}

// Features -------------------------------------------------------------

/// Running mean of every commercial value seen so far in the episode.
class RunningMean {
 public:
  void add(const Matrix& values) {
    sum_ += values.sum();
    count_ += static_cast<double>(values.size());
  }
  double mean() const { return count_ > 0 && sum_ > 0 ? sum_ / count_ : 1.0; }

 private:
  double sum_ = 0.0;
  double count_ = 0.0;
};

/// Feature row for (i, j) sits at j * n + i:
/// [v / mean_v, q / mean_v, remaining / initial budget, tick / horizon].
inline Matrix build_features(const TickState& state,
                             std::span<const AdvertiserAccount> accounts,
                             double running_mean_value) {
  const Index n = state.advertisers();
  const Index m = state.impressions();
  detail::require(static_cast<Index>(accounts.size()) == n,
                  "accounts do not match state");
  detail::require(running_mean_value > 0, "running mean must be > 0");
  Matrix f(n * m, kFeatureDim);
  const double t = static_cast<double>(state.tick) / state.horizon;
  for (Index j = 0; j < m; ++j) {
    for (Index i = 0; i < n; ++i) {
      const auto& a = accounts[static_cast<std::size_t>(i)];
      const double budget = a.initial_budget > 0
                                ? state.budgets(i) / a.initial_budget
                                : 0.0;
      const Index row = j * n + i;
      f(row, 0) = state.values(i, j) / running_mean_value;
      f(row, 1) = state.qualities(i, j) / running_mean_value;
      f(row, 2) = budget;
      f(row, 3) = t;
    }
  }
  return f;
}

// Myerson baseline ---------------------------------------------------------

inline constexpr int kVirtualValueBins = 64;
inline constexpr std::size_t kVirtualValueWindow = 2048;
inline constexpr std::size_t kVirtualValueMinSamples = 100;
inline constexpr double kDensityFloor = 1e-6;

/// psi(r) = r - (1 - F(r)) / f(r) from an empirical CDF and a 64-bin
/// equal-width histogram density.
class VirtualValueEstimator {
 public:
  explicit VirtualValueEstimator(std::span<const double> samples)
      : sorted_(samples.begin(), samples.end()) {
    if (sorted_.empty()) throw ValidationError("empty sample window");
    std::sort(sorted_.begin(), sorted_.end());
    lo_ = sorted_.front();
    hi_ = sorted_.back();
    width_ = (hi_ - lo_) / kVirtualValueBins;
    counts_.assign(kVirtualValueBins, 0);
    if (width_ > 0) {
      for (double s : sorted_) ++counts_[bin(s)];
    }
  }

  double cdf(double r) const {
    const auto it = std::upper_bound(sorted_.begin(), sorted_.end(), r);
    return static_cast<double>(it - sorted_.begin()) / sorted_.size();
  }

  double density(double r) const {
    if (width_ <= 0) return kDensityFloor;
    const double c = counts_[bin(std::clamp(r, lo_, hi_))];
    return std::max(kDensityFloor, c / (sorted_.size() * width_));
  }

  double psi(double r) const {
    const double tail = 1.0 - cdf(r);
    if (tail <= 0.0) return r;
    return r - tail / density(r);
  }

 private:
  std::size_t bin(double x) const {
    const auto b = static_cast<long>((x - lo_) / width_);
    return static_cast<std::size_t>(
        std::clamp<long>(b, 0, kVirtualValueBins - 1));
  }

  std::vector<double> sorted_;
  double lo_ = 0, hi_ = 0, width_ = 0;
  std::vector<int> counts_;
};

/// Empirical virtual value at `r` over the trailing window of `samples`.
inline double empirical_virtual_value(std::span<const double> samples,
                                      double r) {
  if (samples.empty()) throw ValidationError("empty sample window");
  const std::size_t take = std::min(samples.size(), kVirtualValueWindow);
  return VirtualValueEstimator(samples.subspan(samples.size() - take))
      .psi(r);
}

// Boost policies ------------------------------------------------------------

/// Produces boosts for one tick and learns from what it observed.
class BoostPolicy {
 public:
  explicit BoostPolicy(Policy kind) : kind_(kind) {}

  Policy kind() const { return kind_; }

  Matrix boosts(const TickState& s) const {
    switch (kind_) {
      case Policy::none:
        return Matrix::Zero(s.advertisers(), s.impressions());
      case Policy::uniform_vq:
        return kUniformBoostFactor * (s.values + s.qualities);
      case Policy::uniform_v:
        return kUniformBoostFactor * s.values;
      case Policy::myerson_vq:
        return myerson(s.values + s.qualities);
      case Policy::myerson_v:
        return myerson(s.values);
      case Policy::qboost:
        break;
    }
    throw ValidationError("qboost boosts come from the predictor");
  }

  void observe(const TickState& s) {
    if (kind_ == Policy::myerson_vq) remember(s.values + s.qualities);
    if (kind_ == Policy::myerson_v) remember(s.values);
  }

 private:
  Matrix myerson(const Matrix& r) const {
    Matrix z = Matrix::Zero(r.rows(), r.cols());
    if (window_.size() < kVirtualValueMinSamples) return z;
    const std::vector<double> samples(window_.begin(), window_.end());
    const VirtualValueEstimator est(samples);
    for (Index j = 0; j < r.cols(); ++j)
      for (Index i = 0; i < r.rows(); ++i)
        z(i, j) = est.psi(r(i, j)) - r(i, j);
    return z;
  }

  void remember(const Matrix& r) {
    for (Index j = 0; j < r.cols(); ++j)
      for (Index i = 0; i < r.rows(); ++i) window_.push_back(r(i, j));
    while (window_.size() > kVirtualValueWindow) window_.pop_front();
  }

  Policy kind_;
  std::deque<double> window_;
};

// q-Boost ----------------------------------------------------------------

struct PredictedBoosts {
  Matrix raw;  // n x m
  Matrix z;    // n x m, projected unless projection is disabled
};

namespace detail {

inline Matrix unflatten(const Vector& flat, Index n, Index m) {
  Matrix out(n, m);
  for (Index j = 0; j < m; ++j)
    for (Index i = 0; i < n; ++i) out(i, j) = flat(j * n + i);
  return out;
}

inline Vector flatten(const Matrix& mat) {
  Vector out(mat.size());
  for (Index j = 0; j < mat.cols(); ++j)
    for (Index i = 0; i < mat.rows(); ++i) out(j * mat.rows() + i) = mat(i, j);
  return out;
}

inline Matrix columns(const Matrix& m, Index first, Index count) {
  return m.middleCols(first, count);
}

}  // namespace detail

/// Eval-mode boosts from a trained predictor.
inline PredictedBoosts predict_boosts(const PredictorParams& params,
                                      const TickState& state,
                                      std::span<const AdvertiserAccount> acc,
                                      double running_mean, double c,
                                      bool use_projection) {
  std::mt19937_64 unused(0);
  const Matrix f = build_features(state, acc, running_mean);
  const auto fw = forward(params, f, false, unused);
  PredictedBoosts out;
  out.raw = detail::unflatten(fw.raw_boosts, state.advertisers(),
                              state.impressions());
  out.z = use_projection
              ? project(out.raw, state.values, state.qualities, c).z
              : out.raw;
  return out;
}

struct TrainResult {
  PredictorParams params;
  std::vector<EpisodeMetrics> episodes;
  bool stopped_early = false;
};

namespace detail {

inline void finish_episode(EpisodeMetrics& em) {
  double wsum = 0, osum = 0, gsum = 0, lsum = 0;
  for (auto& t : em.ticks) {
    wsum += t.welfare;
    osum += t.opt_welfare;
    t.cum_ratio = osum > 0 ? wsum / osum : 0.0;
    em.daily_revenue += t.revenue;
    gsum += t.grad_norm_sq;
    lsum += t.loss;
  }
  em.daily_welfare = wsum;
  const double k = em.ticks.empty() ? 1.0 : static_cast<double>(em.ticks.size());
  em.mean_grad_norm = gsum / k;
  em.mean_loss = lsum / k;
}

inline std::uint64_t train_episode_seed(std::uint64_t base, int episode) {
  return base * 1000003ULL + static_cast<std::uint64_t>(episode) + 1ULL;
}

}  // namespace detail

/// Seed of the k-th evaluation episode; shared by every policy so that
/// comparisons are paired.
inline std::uint64_t eval_episode_seed(std::uint64_t base, int k) {
  return base * 1000003ULL + 900000ULL + static_cast<std::uint64_t>(k);
}

/// Online training loop: one optimizer step per impression chunk of every
/// tick, loss = optimal welfare - soft welfare + lambda * ||theta||^2,
/// gradients through the surrogate and the projection's VJP.
inline TrainResult train(const TrainConfig& config, Environment& env) {
  config.validate();
  TrainResult result;
  result.params = init_params(config.seed);
  result.params.lr = config.lr;
  result.params.dropout_p = config.dropout_p;
  if (config.episodes == 0) return result;

  PredictorParams& params = result.params;
  std::mt19937_64 dropout_rng(config.seed ^ 0xd1b54a32d192ed03ULL);
  PlateauMonitor monitor(config.lr_patience, config.stop_patience);

  for (int e = 0; e < config.episodes; ++e) {
    env.reset(detail::train_episode_seed(config.seed, e));
    EpisodeMetrics em;
    em.policy = config.use_projection ? "qboost" : "qboost_no_clayer";
    em.episode = e;
    RunningMean mean_v;
    std::optional<double> gamma_prev;

    for (int t = 0; t < env.horizon(); ++t) {
      const TickState state = env.observe(t);
      const Matrix bids = env.bids(state);
      mean_v.add(state.values);
      const Index n = state.advertisers();
      const Index m = state.impressions();

      TickMetrics tm;
      tm.tick = t;
      tm.gamma = gamma_prev.value_or(1.0);
      tm.c = competitive_factor(config.eta, tm.gamma);
      const double reg = config.l2_lambda * params.weights.squared_norm();

      const Matrix features = build_features(state, env.accounts(), mean_v.mean());
      Matrix z(n, m);
      double soft_total = 0.0;
      double grad_sq = 0.0;
      int steps = 0;
      const Index chunk = std::max<Index>(1, config.batch_cap / std::max<Index>(n, 1));
      for (Index first = 0; first < m; first += chunk) {
        const Index cols = std::min(chunk, m - first);
        const Matrix v = detail::columns(state.values, first, cols);
        const Matrix q = detail::columns(state.qualities, first, cols);
        const Matrix b = detail::columns(bids, first, cols);
        const auto fw = forward(params, features.middleRows(first * n, cols * n),
                                true, dropout_rng);
        const Matrix raw = detail::unflatten(fw.raw_boosts, n, cols);
        const Matrix zc = config.use_projection ? project(raw, v, q, tm.c).z : raw;
        z.middleCols(first, cols) = zc;

        soft_total += soft_welfare(b, q, zc, v, config.tau).value;
        const Matrix dz = -soft_welfare_grad_z(b, q, zc, v, config.tau);
        const Matrix draw = config.use_projection
                                ? project_vjp(raw, v, q, tm.c, dz)
                                : dz;
        Tensors grads = backward(params, fw.tape, detail::flatten(draw));
        const StepReport rep =
            optimizer_step(params, std::move(grads), config.l2_lambda,
                           config.clip_norm);
        grad_sq += rep.grad_norm_sq;
        ++steps;
      }

      const AuctionOutcome outcome = run_auction(state, bids, z);
      const Welfare w = welfare(state, outcome);
      tm.welfare = w.total;
      tm.revenue = w.revenue;
      tm.opt_welfare = optimal_welfare(state);
      tm.loss = tm.opt_welfare - soft_total + reg;
      tm.grad_norm_sq = steps ? grad_sq / steps : 0.0;
      if (!std::isfinite(tm.loss)) {
        throw Error("non-finite loss at episode " + std::to_string(e) +
                    ", tick " + std::to_string(t));
      }
      em.ticks.push_back(tm);
      env.settle(state, outcome);
      gamma_prev = min_bid_ratio(bids, state.values);
    }
    detail::finish_episode(em);
    result.episodes.push_back(em);

    const ScheduleDecision d = monitor.observe(em.mean_loss);
    if (d.lr_factor_applied) params.lr *= config.lr_factor;
    if (d.stop) {
      result.stopped_early = true;
      break;
    }
  }
  return result;
}

/// Runs one episode of `env` (already reset) under a fixed boost policy.
/// For qboost the predictor runs in eval mode. The loss column is the
/// welfare gap optimal - soft, with no regularizer.
inline EpisodeMetrics evaluate(Policy policy, Environment& env,
                               const TrainConfig& config,
                               const PredictorParams* params = nullptr) {
  if (policy == Policy::qboost && params == nullptr) {
    throw ValidationError("qboost evaluation needs trained params");
  }
  EpisodeMetrics em;
  em.policy = policy_name(policy);
  BoostPolicy baseline(policy);
  RunningMean mean_v;
  std::optional<double> gamma_prev;

  for (int t = 0; t < env.horizon(); ++t) {
    const TickState state = env.observe(t);
    const Matrix bids = env.bids(state);
    mean_v.add(state.values);

    TickMetrics tm;
    tm.tick = t;
    tm.gamma = gamma_prev.value_or(1.0);
    tm.c = competitive_factor(config.eta, tm.gamma);
    Matrix z;
    if (policy == Policy::qboost) {
      z = predict_boosts(*params, state, env.accounts(), mean_v.mean(), tm.c,
                         config.use_projection)
              .z;
    } else {
      z = baseline.boosts(state);
    }
    const AuctionOutcome outcome = run_auction(state, bids, z);
    const Welfare w = welfare(state, outcome);
    tm.welfare = w.total;
    tm.revenue = w.revenue;
    tm.opt_welfare = optimal_welfare(state);
    tm.loss = tm.opt_welfare -
              soft_welfare(bids, state.qualities, z, state.values, config.tau)
                  .value;
    em.ticks.push_back(tm);
    baseline.observe(state);
    env.settle(state, outcome);
    gamma_prev = min_bid_ratio(bids, state.values);
  }
  detail::finish_episode(em);
  return em;
}

/// Evaluates `episodes` paired episodes starting from eval seed 0.
inline std::vector<EpisodeMetrics> evaluate_episodes(
    Policy policy, Environment& env, const TrainConfig& config,
    const PredictorParams* params, int episodes, std::uint64_t base_seed) {
  std::vector<EpisodeMetrics> out;
  for (int k = 0; k < episodes; ++k) {
    env.reset(eval_episode_seed(base_seed, k));
    EpisodeMetrics em = evaluate(policy, env, config, params);
    em.episode = k;
    out.push_back(std::move(em));
  }
  return out;
}

}  // namespace qboost

#endif  // QBOOST_LEARNER_HPP
