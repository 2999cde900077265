#ifndef QBOOST_EPISODE_HPP
#define QBOOST_EPISODE_HPP

#include <qboost/environment.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace qboost {

struct LoadedEpisode {
  EpisodeConfig config;
  std::vector<AdvertiserAccount> accounts;
  std::vector<TickDraw> ticks;
};

namespace csv {

inline std::vector<std::string> split(std::string_view line) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (true) {
    const auto pos = line.find(',', start);
    std::string_view cell = line.substr(start, pos == line.npos
                                                   ? line.npos
                                                   : pos - start);
    while (!cell.empty() && (cell.back() == '\r' || cell.back() == ' '))
      cell.remove_suffix(1);
    while (!cell.empty() && cell.front() == ' ') cell.remove_prefix(1);
    out.emplace_back(cell);
    if (pos == line.npos) break;
    start = pos + 1;
  }
  return out;
}

/// Reads a headed CSV, checking the header against `expected` exactly.
/// Rows carry their 1-based line number for error messages.
struct Table {
  std::string path;
  std::vector<std::pair<int, std::vector<std::string>>> rows;

  [[noreturn]] void fail(int line, const std::string& what) const {
    throw ValidationError(path + ":" + std::to_string(line) + ": " + what);
  }

  double number(int line, const std::string& cell,
                const char* column) const {
    double v = 0.0;
    const char* b = cell.data();
    const char* e = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (cell.empty() || ec != std::errc() || ptr != e || !std::isfinite(v)) {
      fail(line, std::string("non-numeric ") + column + " '" + cell + "'");
    }
    return v;
  }

  long integer(int line, const std::string& cell, const char* column) const {
    long v = 0;
    const char* b = cell.data();
    const char* e = cell.data() + cell.size();
    const auto [ptr, ec] = std::from_chars(b, e, v);
    if (cell.empty() || ec != std::errc() || ptr != e) {
      fail(line, std::string("non-integer ") + column + " '" + cell + "'");
    }
    return v;
  }
};

inline Table read(const std::filesystem::path& path,
                  const std::vector<std::string>& expected) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path.string());
  Table t;
  t.path = path.string();
  std::string line;
  if (!std::getline(in, line)) t.fail(1, "missing header");
  const auto header = split(line);
  for (const auto& col : expected) {
    if (std::find(header.begin(), header.end(), col) == header.end()) {
      t.fail(1, "missing column '" + col + "'");
    }
  }
  if (header != expected) {
    t.fail(1, "header must be exactly the documented column order");
  }
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split(line);
    if (cells.size() != expected.size()) {
      t.fail(lineno, "expected " + std::to_string(expected.size()) +
                         " fields, got " + std::to_string(cells.size()));
    }
    t.rows.emplace_back(lineno, std::move(cells));
  }
  return t;
}

}  // namespace csv

/// Parses an accounts CSV and a ticks CSV into a replayable episode.
///
/// accounts: advertiser_id,budget,roi,strategy,initial_multiplier
/// ticks:    tick,impression_id,advertiser_id,value,conv_prob,imp_quality_units
///
/// Every (tick, impression) must list every advertiser exactly once. Ticks
/// must be numbered 0..T-1. The quality unit is 0.01 of the mean value.
inline LoadedEpisode load_episode_csv(const std::filesystem::path& accounts_path,
                                      const std::filesystem::path& ticks_path) {
  const auto acc = csv::read(accounts_path, {"advertiser_id", "budget", "roi",
                                             "strategy", "initial_multiplier"});
  LoadedEpisode ep;
  std::map<long, Index> row_of;
  for (const auto& [line, c] : acc.rows) {
    AdvertiserAccount a;
    const long id = acc.integer(line, c[0], "advertiser_id");
    if (row_of.count(id)) acc.fail(line, "duplicate advertiser_id");
    a.id = static_cast<int>(id);
    a.initial_budget = acc.number(line, c[1], "budget");
    if (a.initial_budget < 0) acc.fail(line, "negative budget");
    a.remaining_budget = a.initial_budget;
    a.roi = acc.number(line, c[2], "roi");
    if (a.roi <= 0) acc.fail(line, "roi must be > 0");
    if (c[3] == "fixed") {
      a.strategy = Strategy::fixed;
    } else if (c[3] == "pid") {
      a.strategy = Strategy::pid;
    } else {
      acc.fail(line, "unknown strategy '" + c[3] + "'");
    }
    a.pacing_multiplier = acc.number(line, c[4], "initial_multiplier");
    if (a.pacing_multiplier < 0) acc.fail(line, "negative initial_multiplier");
    row_of[id] = static_cast<Index>(ep.accounts.size());
    ep.accounts.push_back(a);
  }
  if (ep.accounts.empty()) acc.fail(1, "no advertisers");
  const Index n = static_cast<Index>(ep.accounts.size());

  const auto tk = csv::read(ticks_path,
                            {"tick", "impression_id", "advertiser_id", "value",
                             "conv_prob", "imp_quality_units"});
  struct Cell {
    double value, conv, units;
    int line;
  };
  // tick -> impression id (first-seen order) -> advertiser row -> cell
  std::map<long, std::vector<std::pair<std::string, std::vector<
                                                       std::optional<Cell>>>>>
      grid;
  double value_sum = 0.0;
  long value_count = 0;
  for (const auto& [line, c] : tk.rows) {
    const long t = tk.integer(line, c[0], "tick");
    if (t < 0) tk.fail(line, "negative tick");
    const long id = tk.integer(line, c[2], "advertiser_id");
    const auto it = row_of.find(id);
    if (it == row_of.end()) {
      tk.fail(line, "advertiser_id " + std::to_string(id) +
                        " not present in accounts file");
    }
    Cell cell{tk.number(line, c[3], "value"), tk.number(line, c[4], "conv_prob"),
              tk.number(line, c[5], "imp_quality_units"), line};
    if (cell.value < 0) tk.fail(line, "negative value");
    if (cell.conv < 0 || cell.conv > 1) tk.fail(line, "conv_prob outside [0,1]");
    if (cell.units < 0 || cell.units > kMaxImpressionUnits)
      tk.fail(line, "imp_quality_units outside [0,100]");
    auto& imps = grid[t];
    auto pos = std::find_if(imps.begin(), imps.end(),
                            [&](const auto& p) { return p.first == c[1]; });
    if (pos == imps.end()) {
      imps.emplace_back(c[1], std::vector<std::optional<Cell>>(
                                  static_cast<std::size_t>(n)));
      pos = std::prev(imps.end());
    }
    auto& slot = pos->second[static_cast<std::size_t>(it->second)];
    if (slot) tk.fail(line, "duplicate (tick, impression, advertiser) row");
    slot = cell;
    value_sum += cell.value;
    ++value_count;
  }
  if (grid.empty()) tk.fail(1, "no tick rows");

  long expect = 0;
  for (const auto& [t, imps] : grid) {
    if (t != expect) {
      tk.fail(imps.front().second.front() ? imps.front().second.front()->line
                                          : 1,
              "ticks must be numbered 0..T-1 without gaps (missing tick " +
                  std::to_string(expect) + ")");
    }
    ++expect;
    TickDraw d;
    const Index m = static_cast<Index>(imps.size());
    d.values.resize(n, m);
    d.conv_prob.resize(n, m);
    d.imp_quality_units.resize(n, m);
    for (Index j = 0; j < m; ++j) {
      const auto& [imp_id, cells] = imps[static_cast<std::size_t>(j)];
      int imp_line = 1;
      for (const auto& cell : cells)
        if (cell) imp_line = std::max(imp_line, cell->line);
      for (Index i = 0; i < n; ++i) {
        const auto& cell = cells[static_cast<std::size_t>(i)];
        if (!cell) {
          tk.fail(imp_line, "tick " + std::to_string(t) + " impression " + imp_id +
                         " has no row for advertiser " +
                         std::to_string(ep.accounts[static_cast<std::size_t>(
                                                        i)].id));
        }
        d.values(i, j) = cell->value;
        d.conv_prob(i, j) = cell->conv;
        d.imp_quality_units(i, j) = cell->units;
      }
    }
    ep.ticks.push_back(std::move(d));
  }

  EpisodeConfig& cfg = ep.config;
  cfg.advertisers = static_cast<int>(n);
  cfg.ticks_per_day = static_cast<int>(ep.ticks.size());
  int mmin = std::numeric_limits<int>::max(), mmax = 0;
  for (const auto& d : ep.ticks) {
    mmin = std::min(mmin, static_cast<int>(d.values.cols()));
    mmax = std::max(mmax, static_cast<int>(d.values.cols()));
  }
  cfg.impressions_min = mmin;
  cfg.impressions_max = mmax;
  const double mean = value_count ? value_sum / value_count : 0.0;
  cfg.value_mean = mean > 0 ? mean : 1.0;
  cfg.unit_value = 0.01 * cfg.value_mean;
  return ep;
}

/// An episode source: synthetic from a config, or replayed from CSV.
///
/// Holds the live account state between ticks. `reset` restores the
/// starting accounts; synthetic episodes redraw everything from the seed,
/// replayed ones keep their ticks and reseed only the user events.
class Environment {
 public:
  static Environment synthetic(EpisodeConfig config) {
    config.validate();
    Environment env;
    env.config_ = config;
    env.reset(config.seed);
    return env;
  }

  static Environment replay(LoadedEpisode episode) {
    Environment env;
    env.config_ = episode.config;
    env.fixed_accounts_ = std::move(episode.accounts);
    env.fixed_ticks_ = std::move(episode.ticks);
    env.reset(episode.config.seed);
    return env;
  }

  void reset(std::uint64_t episode_seed) {
    streams_ = RngStreams(episode_seed);
    if (fixed_ticks_.empty()) {
      accounts_ = make_accounts(config_, streams_);
    } else {
      accounts_ = fixed_accounts_;
    }
    current_.reset();
  }

  const EpisodeConfig& config() const { return config_; }
  EpisodeConfig& mutable_config() { return config_; }
  int horizon() const {
    return fixed_ticks_.empty() ? config_.ticks_per_day
                                : static_cast<int>(fixed_ticks_.size());
  }
  const std::vector<AdvertiserAccount>& accounts() const { return accounts_; }
  const RngStreams& streams() const { return streams_; }

  /// State for `tick` given the current accounts.
  TickState observe(int tick) {
    detail::require(tick >= 0 && tick < horizon(), "tick out of range");
    if (fixed_ticks_.empty()) {
      current_ = draw_tick(config_, streams_, tick);
    } else {
      current_ = fixed_ticks_[static_cast<std::size_t>(tick)];
    }
    return assemble_state(*current_, accounts_, config_.unit_value, tick,
                          horizon());
  }

  /// Raw draws behind the last `observe`.
  const TickDraw& current_draw() const {
    detail::require(current_.has_value(), "no tick observed yet");
    return *current_;
  }

  Matrix bids(const TickState& state) const {
    return agent_bids(state, accounts_, config_.gamma_min,
                      config_.multiplier_cap);
  }

  SettleResult settle(const TickState& state, const AuctionOutcome& outcome) {
    SettleResult r = settle_tick(state, outcome, current_draw().imp_quality_units,
                                 accounts_, streams_, config_);
    accounts_ = r.accounts;
    return r;
  }

 private:
  Environment() = default;

  EpisodeConfig config_;
  std::vector<AdvertiserAccount> fixed_accounts_;
  std::vector<TickDraw> fixed_ticks_;
  std::vector<AdvertiserAccount> accounts_;
  RngStreams streams_;
  std::optional<TickDraw> current_;
};

}  // namespace qboost

#endif  // QBOOST_EPISODE_HPP
