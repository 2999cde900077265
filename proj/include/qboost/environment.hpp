#ifndef QBOOST_ENVIRONMENT_HPP
#define QBOOST_ENVIRONMENT_HPP

#include <qboost/auction.hpp>
#include <qboost/types.hpp>

#include <json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace qboost {

inline constexpr double kMaxAccountUnits = 50.0;
inline constexpr double kMaxImpressionUnits = 100.0;
inline constexpr double kConversionUnits = 5.0;
inline constexpr double kNoInteractionUnits = 1.0;
inline constexpr double kReportUnits = -30.0;

enum class Strategy { fixed, pid };

NLOHMANN_JSON_SERIALIZE_ENUM(Strategy, {{Strategy::fixed, "fixed"},
                                        {Strategy::pid, "pid"}})

struct AdvertiserAccount {
  int id = 0;
  double initial_budget = 0.0;
  double remaining_budget = 0.0;
  double roi = 1.0;
  double quality_units = kMaxAccountUnits;
  double pacing_multiplier = 1.0;
  Strategy strategy = Strategy::fixed;
  // Pacing bookkeeping.
  double spent = 0.0;
  double value_won = 0.0;
  double integral = 0.0;
};

struct PacingGains {
  double p = 1.0;
  double i = 0.1;
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(PacingGains, p, i)

struct EpisodeConfig {
  int advertisers = 48;
  int ticks_per_day = 48;
  int impressions_min = 32;
  int impressions_max = 64;
  // Log-normal values scaled to `value_mean`.
  double value_mean = 1.0;
  double value_log_sigma = 0.5;
  double unit_value = 0.01;  // money per quality unit
  double imp_quality_mean = 25.0;
  double imp_quality_sd = 10.0;
  double conv_prob_max = 0.1;
  double eta = 0.75;
  double budget_min = 30.0;
  double budget_max = 90.0;
  double roi_min = 0.6;
  double roi_max = 1.0;
  double pid_fraction = 0.5;
  double multiplier_min = 0.5;
  double multiplier_max = 1.0;
  double gamma_min = 0.3;
  double multiplier_cap = 1.0;
  bool quality_dynamics = true;
  PacingGains gains;
  std::uint64_t seed = 0;

  void validate() const {
    detail::require(advertisers > 0 && ticks_per_day > 0,
                    "advertisers and ticks_per_day must be positive");
    detail::require(impressions_min > 0 && impressions_max >= impressions_min,
                    "impressions range must be positive and ordered");
    detail::require(unit_value > 0.0, "unit_value must be > 0");
    detail::require(value_mean > 0.0 && value_log_sigma >= 0.0,
                    "bad value distribution");
    detail::require(conv_prob_max >= 0.0 && conv_prob_max <= 1.0,
                    "conv_prob_max must lie in [0, 1]");
    detail::require(eta > 0.0 && eta < 1.0, "eta must lie in (0, 1)");
    detail::require(budget_min >= 0.0 && budget_max >= budget_min,
                    "bad budget range");
    detail::require(roi_min > 0.0 && roi_max >= roi_min, "bad roi range");
    detail::require(pid_fraction >= 0.0 && pid_fraction <= 1.0,
                    "pid_fraction must lie in [0, 1]");
    detail::require(multiplier_min >= 0.0 && multiplier_max >= multiplier_min,
                    "bad multiplier range");
    detail::require(gamma_min >= 0.0 && multiplier_cap >= gamma_min,
                    "bad multiplier floor/cap");
  }
};
NLOHMANN_DEFINE_TYPE_NON_INTRUSIVE_WITH_DEFAULT(
    EpisodeConfig, advertisers, ticks_per_day, impressions_min,
    impressions_max, value_mean, value_log_sigma, unit_value,
    imp_quality_mean, imp_quality_sd, conv_prob_max, eta, budget_min,
    budget_max, roi_min, roi_max, pid_fraction, multiplier_min,
    multiplier_max, gamma_min, multiplier_cap, quality_dynamics, gains, seed)

enum class EventKind { none, conversion, report };

struct UserEvent {
  Index impression = 0;
  Index advertiser = 0;
  EventKind kind = EventKind::none;
};

// Random streams -----------------------------------------------------------

/// Counter-based seeding: every (purpose, tick, impression) triple gets its
/// own generator, so draws never depend on iteration order or on what other
/// code consumed before.
class RngStreams {
 public:
  enum class Purpose : std::uint64_t {
    accounts = 1,
    tick_size = 2,
    values = 3,
    imp_quality = 4,
    conv_prob = 5,
    events = 6,
  };

  explicit RngStreams(std::uint64_t seed = 0) : seed_(seed) {}

  std::uint64_t seed() const { return seed_; }

  std::mt19937_64 stream(Purpose purpose, std::uint64_t a = 0,
                         std::uint64_t b = 0) const {
    std::uint64_t h = mix(seed_ ^ 0x9e3779b97f4a7c15ULL);
    h = mix(h ^ static_cast<std::uint64_t>(purpose));
    h = mix(h ^ (a + 0x632be59bd9b4e019ULL));
    h = mix(h ^ (b + 0x85157af5ULL));
    return std::mt19937_64(h);
  }

 private:
  static std::uint64_t mix(std::uint64_t x) {
    // splitmix64 finalizer
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
  }

  std::uint64_t seed_;
};

// Accounts and ticks ---------------------------------------------------------

/// Fresh synthetic accounts for one episode.
inline std::vector<AdvertiserAccount> make_accounts(
    const EpisodeConfig& config, const RngStreams& streams) {
  config.validate();
  auto rng = streams.stream(RngStreams::Purpose::accounts);
  std::uniform_real_distribution<double> budget(config.budget_min,
                                                config.budget_max);
  std::uniform_real_distribution<double> roi(config.roi_min, config.roi_max);
  std::uniform_real_distribution<double> mult(config.multiplier_min,
                                              config.multiplier_max);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  std::vector<AdvertiserAccount> out(
      static_cast<std::size_t>(config.advertisers));
  for (int i = 0; i < config.advertisers; ++i) {
    auto& a = out[static_cast<std::size_t>(i)];
    a.id = i;
    a.initial_budget = budget(rng);
    a.remaining_budget = a.initial_budget;
    a.roi = roi(rng);
    a.pacing_multiplier = mult(rng);
    a.strategy = unit(rng) < config.pid_fraction ? Strategy::pid
                                                 : Strategy::fixed;
  }
  return out;
}

/// Exogenous per-tick draws, independent of account state.
struct TickDraw {
  Matrix values;
  Matrix imp_quality_units;
  Matrix conv_prob;
};

inline TickDraw draw_tick(const EpisodeConfig& config,
                          const RngStreams& streams, int tick) {
  using P = RngStreams::Purpose;
  const auto t = static_cast<std::uint64_t>(tick);
  auto size_rng = streams.stream(P::tick_size, t);
  std::uniform_int_distribution<int> size(config.impressions_min,
                                          config.impressions_max);
  const Index m = size(size_rng);
  const Index n = config.advertisers;

  // mean of lognormal(mu, s) is exp(mu + s^2 / 2)
  const double s = config.value_log_sigma;
  const double mu = std::log(config.value_mean) - 0.5 * s * s;

  TickDraw d;
  d.values.resize(n, m);
  d.imp_quality_units.resize(n, m);
  d.conv_prob.resize(n, m);
  for (Index j = 0; j < m; ++j) {
    const auto jj = static_cast<std::uint64_t>(j);
    auto vr = streams.stream(P::values, t, jj);
    auto qr = streams.stream(P::imp_quality, t, jj);
    auto cr = streams.stream(P::conv_prob, t, jj);
    std::lognormal_distribution<double> value(mu, s);
    std::normal_distribution<double> quality(config.imp_quality_mean,
                                             config.imp_quality_sd);
    std::uniform_real_distribution<double> conv(0.0, config.conv_prob_max);
    for (Index i = 0; i < n; ++i) {
      d.values(i, j) = value(vr);
      d.imp_quality_units(i, j) =
          std::clamp(quality(qr), 0.0, kMaxImpressionUnits);
      d.conv_prob(i, j) = conv(cr);
    }
  }
  return d;
}

/// Combines exogenous draws with current account state.
inline TickState assemble_state(const TickDraw& draw,
                                std::span<const AdvertiserAccount> accounts,
                                double unit_value, int tick, int horizon) {
  const Index n = draw.values.rows();
  detail::require(static_cast<Index>(accounts.size()) == n,
                  "accounts do not match tick");
  TickState s;
  s.values = draw.values;
  s.conv_prob = draw.conv_prob;
  s.qualities.resize(n, draw.values.cols());
  s.budgets.resize(n);
  s.rois.resize(n);
  for (Index i = 0; i < n; ++i) {
    const auto& a = accounts[static_cast<std::size_t>(i)];
    s.qualities.row(i) =
        (draw.imp_quality_units.row(i).array() + a.quality_units) *
        unit_value;
    s.budgets(i) = a.remaining_budget;
    s.rois(i) = a.roi;
  }
  s.tick = tick;
  s.horizon = horizon;
  return s;
}

inline TickState generate_tick(const EpisodeConfig& config,
                               std::span<const AdvertiserAccount> accounts,
                               const RngStreams& streams, int tick) {
  return assemble_state(draw_tick(config, streams, tick), accounts,
                        config.unit_value, tick, config.ticks_per_day);
}

inline double effective_multiplier(const AdvertiserAccount& a,
                                   double gamma_min, double cap) {
  if (a.strategy == Strategy::fixed) {
    return std::max(a.pacing_multiplier, gamma_min);
  }
  return std::clamp(a.pacing_multiplier, gamma_min, cap);
}

/// b_{i,j} = multiplier_i * v_{i,j}.
inline Matrix agent_bids(const TickState& state,
                         std::span<const AdvertiserAccount> accounts,
                         double gamma_min = 0.0,
                         double cap = std::numeric_limits<double>::infinity()) {
  detail::require(static_cast<Index>(accounts.size()) == state.advertisers(),
                  "accounts do not match state");
  Matrix bids = state.values;
  for (Index i = 0; i < state.advertisers(); ++i) {
    bids.row(i) *=
        effective_multiplier(accounts[static_cast<std::size_t>(i)], gamma_min,
                             cap);
  }
  return bids;
}

/// One proportional-integral pacing update for a pid account.
///
/// The proportional term is the clamped ratio of target to actual spend
/// fraction; the integral term accumulates its log. The result is limited
/// by the ROI cap (cumulative spend <= roi * cumulative value) and kept in
/// [gamma_min, cap].
inline void update_pacing(AdvertiserAccount& a, int tick, int horizon,
                          const EpisodeConfig& config) {
  if (a.strategy != Strategy::pid) return;
  const double target = static_cast<double>(tick + 1) / horizon;
  const double actual =
      a.initial_budget > 0.0 ? a.spent / a.initial_budget : 1.0;
  const double ratio =
      std::clamp(actual > 0.0 ? target / actual : 1.1, 0.9, 1.1);
  a.integral = std::clamp(a.integral + std::log(ratio), -10.0, 10.0);
  const double integral_factor =
      std::clamp(std::exp(config.gains.i * a.integral), 0.9, 1.1);
  a.pacing_multiplier *= std::pow(ratio, config.gains.p) * integral_factor;
  if (a.value_won > 0.0 && a.spent > a.roi * a.value_won) {
    a.pacing_multiplier *= a.roi * a.value_won / a.spent;
  }
  a.pacing_multiplier =
      std::clamp(a.pacing_multiplier, config.gamma_min, config.multiplier_cap);
}

/// Report probability for an unconverted impression.
inline double report_probability(double total_quality_units) {
  return std::clamp((100.0 - total_quality_units) / 1000.0, 0.0, 0.1);
}

struct SettleResult {
  std::vector<UserEvent> events;
  std::vector<AdvertiserAccount> accounts;
};

/// Draws user events for displayed impressions, applies the quality-score
/// adjustments to winners, charges payments and updates pacing.
///
/// Event probabilities use the quality units at the start of the tick.
/// `imp_quality_units` is the impression part of the winner's quality.
inline SettleResult settle_tick(const TickState& state,
                                const AuctionOutcome& outcome,
                                const Matrix& imp_quality_units,
                                std::vector<AdvertiserAccount> accounts,
                                const RngStreams& streams,
                                const EpisodeConfig& config) {
  const Index n = state.advertisers();
  const Index m = state.impressions();
  detail::require(static_cast<Index>(accounts.size()) == n,
                  "accounts do not match state");
  detail::require_shape(imp_quality_units, n, m, "imp_quality_units");

  std::vector<double> start_units(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i)
    start_units[static_cast<std::size_t>(i)] =
        accounts[static_cast<std::size_t>(i)].quality_units;

  SettleResult out;
  for (Index j = 0; j < m; ++j) {
    const auto& w = outcome.winners[static_cast<std::size_t>(j)];
    if (!w) continue;
    const Index i = *w;
    auto rng = streams.stream(RngStreams::Purpose::events,
                              static_cast<std::uint64_t>(state.tick),
                              static_cast<std::uint64_t>(j));
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const double total_units =
        start_units[static_cast<std::size_t>(i)] + imp_quality_units(i, j);
    UserEvent ev{j, i, EventKind::none};
    if (u(rng) < state.conv_prob(i, j)) {
      ev.kind = EventKind::conversion;
    } else if (u(rng) < report_probability(total_units)) {
      ev.kind = EventKind::report;
    }
    out.events.push_back(ev);

    auto& a = accounts[static_cast<std::size_t>(i)];
    const double pay = outcome.payments(i, j);
    if (a.remaining_budget - pay < -1e-9) {
      throw Error("budget would go negative for advertiser " +
                  std::to_string(a.id));
    }
    a.remaining_budget = std::max(0.0, a.remaining_budget - pay);
    a.spent += pay;
    a.value_won += state.values(i, j);
    if (config.quality_dynamics) {
      const double d = ev.kind == EventKind::conversion ? kConversionUnits
                       : ev.kind == EventKind::report   ? kReportUnits
                                                        : kNoInteractionUnits;
      a.quality_units = std::clamp(a.quality_units + d, 0.0, kMaxAccountUnits);
    }
  }
  for (auto& a : accounts) update_pacing(a, state.tick, state.horizon, config);
  out.accounts = std::move(accounts);
  return out;
}

}  // namespace qboost

#endif  // QBOOST_ENVIRONMENT_HPP
