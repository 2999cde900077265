#ifndef QBOOST_REPORT_HPP
#define QBOOST_REPORT_HPP

#include <qboost/episode.hpp>
#include <qboost/learner.hpp>

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

namespace qboost {

inline std::string format_fixed(double x) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.6f", x == 0.0 ? 0.0 : x);
  return buf;
}

struct MetricsFiles {
  std::filesystem::path per_tick;
  std::filesystem::path summary;
};

namespace detail {

inline std::ofstream open_for_write(const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot write " + path.string());
  return out;
}

inline void ensure_dir(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec || !std::filesystem::is_directory(dir)) {
    throw IoError("cannot create directory " + dir.string());
  }
}

}  // namespace detail

/// per_tick.csv: episode,tick,welfare,opt_welfare,cum_ratio,revenue,loss
/// summary.csv:  policy,daily_welfare,daily_revenue,mean_grad_norm
/// One summary row per episode, in order.
inline MetricsFiles write_metrics(const std::vector<EpisodeMetrics>& metrics,
                                  const std::filesystem::path& dir) {
  detail::require(!metrics.empty(), "no metrics to write");
  detail::ensure_dir(dir);
  MetricsFiles files{dir / "per_tick.csv", dir / "summary.csv"};

  auto tick = detail::open_for_write(files.per_tick);
  tick << "episode,tick,welfare,opt_welfare,cum_ratio,revenue,loss\n";
  for (const auto& em : metrics) {
    for (const auto& t : em.ticks) {
      tick << em.episode << ',' << t.tick << ',' << format_fixed(t.welfare)
           << ',' << format_fixed(t.opt_welfare) << ','
           << format_fixed(t.cum_ratio) << ',' << format_fixed(t.revenue)
           << ',' << format_fixed(t.loss) << '\n';
    }
  }
  auto sum = detail::open_for_write(files.summary);
  sum << "policy,daily_welfare,daily_revenue,mean_grad_norm\n";
  for (const auto& em : metrics) {
    sum << em.policy << ',' << format_fixed(em.daily_welfare) << ','
        << format_fixed(em.daily_revenue) << ','
        << format_fixed(em.mean_grad_norm) << '\n';
  }
  if (!tick || !sum) throw IoError("write failed in " + dir.string());
  return files;
}

struct PerTickRow {
  int episode = 0;
  int tick = 0;
  double welfare = 0, opt_welfare = 0, cum_ratio = 0, revenue = 0, loss = 0;
};

inline std::vector<PerTickRow> read_per_tick_csv(
    const std::filesystem::path& path) {
  const auto t = csv::read(path, {"episode", "tick", "welfare", "opt_welfare",
                                  "cum_ratio", "revenue", "loss"});
  std::vector<PerTickRow> rows;
  for (const auto& [line, c] : t.rows) {
    PerTickRow r;
    r.episode = static_cast<int>(t.integer(line, c[0], "episode"));
    r.tick = static_cast<int>(t.integer(line, c[1], "tick"));
    r.welfare = t.number(line, c[2], "welfare");
    r.opt_welfare = t.number(line, c[3], "opt_welfare");
    r.cum_ratio = t.number(line, c[4], "cum_ratio");
    r.revenue = t.number(line, c[5], "revenue");
    r.loss = t.number(line, c[6], "loss");
    rows.push_back(r);
  }
  return rows;
}

// Charts -------------------------------------------------------------------

struct AxisRange {
  double lo = 0.0;
  double hi = 1.0;
};

/// [min, max] of the data widened by 5% of its span on each side.
/// A flat series is widened by 5% of its magnitude (or 0.05 at zero).
inline AxisRange padded_range(const std::vector<double>& data) {
  detail::require(!data.empty(), "empty series");
  const auto [mn, mx] = std::minmax_element(data.begin(), data.end());
  double span = *mx - *mn;
  if (span <= 0.0) span = std::abs(*mn) > 0 ? std::abs(*mn) : 1.0;
  return {*mn - 0.05 * span, *mx + 0.05 * span};
}

struct Series {
  std::string label;
  std::vector<double> y;
};

struct Chart {
  std::string title;
  std::string x_label;
  std::string y_label;
  std::vector<Series> series;
};

namespace detail {

inline std::string xml_escape(const std::string& s) {
  std::string out;
  for (char ch : s) {
    switch (ch) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += ch;
    }
  }
  return out;
}

inline constexpr const char* kPalette[] = {"#1f77b4", "#d62728", "#2ca02c",
                                           "#ff7f0e", "#9467bd", "#8c564b",
                                           "#e377c2", "#7f7f7f"};

}  // namespace detail

/// Line chart in an 800x500 viewBox, one polyline per series.
inline std::string render_chart(const Chart& chart) {
  detail::require(!chart.series.empty(), "no series to plot");
  const std::size_t len = chart.series.front().y.size();
  std::vector<double> all;
  for (const auto& s : chart.series) {
    detail::require(!s.y.empty(), "empty series '" + s.label + "'");
    detail::require(s.y.size() == len, "mismatched series lengths");
    all.insert(all.end(), s.y.begin(), s.y.end());
  }
  const AxisRange yr = padded_range(all);
  std::vector<double> xs(len);
  for (std::size_t k = 0; k < len; ++k) xs[k] = static_cast<double>(k);
  const AxisRange xr = padded_range(xs);

  constexpr double W = 800, H = 500, L = 70, R = 160, T = 40, B = 50;
  auto px = [&](double x) { return L + (x - xr.lo) / (xr.hi - xr.lo) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - yr.lo) / (yr.hi - yr.lo) * (H - T - B); };

  std::ostringstream svg;
  svg << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n"
      << "<svg xmlns=\"http://www.w3.org/2000/svg\" viewBox=\"0 0 800 500\" "
         "width=\"800\" height=\"500\">\n"
      << "<rect x=\"0\" y=\"0\" width=\"800\" height=\"500\" fill=\"white\"/>\n"
      << "<text x=\"400\" y=\"24\" text-anchor=\"middle\" font-size=\"16\">"
      << detail::xml_escape(chart.title) << "</text>\n"
      << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R
      << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
      << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L
      << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n"
      << "<text x=\"" << (L + W - R) / 2 << "\" y=\"" << H - 12
      << "\" text-anchor=\"middle\" font-size=\"13\">"
      << detail::xml_escape(chart.x_label) << "</text>\n"
      << "<text x=\"18\" y=\"" << (T + H - B) / 2
      << "\" text-anchor=\"middle\" font-size=\"13\" transform=\"rotate(-90 18 "
      << (T + H - B) / 2 << ")\">" << detail::xml_escape(chart.y_label)
      << "</text>\n";
  for (int k = 0; k <= 4; ++k) {
    const double y = yr.lo + (yr.hi - yr.lo) * k / 4.0;
    svg << "<text x=\"" << L - 6 << "\" y=\"" << format_fixed(py(y) + 4)
        << "\" text-anchor=\"end\" font-size=\"11\">" << format_fixed(y)
        << "</text>\n";
  }
  for (std::size_t s = 0; s < chart.series.size(); ++s) {
    const char* color = detail::kPalette[s % std::size(detail::kPalette)];
    svg << "<polyline fill=\"none\" stroke=\"" << color
        << "\" stroke-width=\"1.5\" points=\"";
    const auto& y = chart.series[s].y;
    for (std::size_t k = 0; k < y.size(); ++k) {
      if (k) svg << ' ';
      svg << format_fixed(px(xs[k])) << ',' << format_fixed(py(y[k]));
    }
    svg << "\"/>\n";
    const double ly = T + 20.0 * static_cast<double>(s);
    svg << "<line x1=\"" << W - R + 10 << "\" y1=\"" << ly << "\" x2=\""
        << W - R + 30 << "\" y2=\"" << ly << "\" stroke=\"" << color
        << "\" stroke-width=\"2\"/>\n"
        << "<text x=\"" << W - R + 36 << "\" y=\"" << ly + 4
        << "\" font-size=\"12\">" << detail::xml_escape(chart.series[s].label)
        << "</text>\n";
  }
  svg << "</svg>\n";
  return svg.str();
}

/// Cumulative ratio per tick (averaged over episodes) and mean loss per
/// episode, one series per input file.
inline std::pair<Chart, Chart> charts_from_per_tick(
    const std::vector<std::filesystem::path>& paths,
    const std::vector<std::string>& labels) {
  detail::require(!paths.empty(), "no per_tick files");
  detail::require(paths.size() == labels.size(), "one label per file");
  Chart ratio{"Cumulative welfare ratio", "tick", "cumulative welfare ratio", {}};
  Chart loss{"Loss per episode", "episode", "mean loss", {}};
  for (std::size_t k = 0; k < paths.size(); ++k) {
    const auto rows = read_per_tick_csv(paths[k]);
    detail::require(!rows.empty(), "empty series in " + paths[k].string());
    std::map<int, std::pair<double, int>> by_tick, by_episode;
    for (const auto& r : rows) {
      auto& t = by_tick[r.tick];
      t.first += r.cum_ratio;
      t.second += 1;
      auto& e = by_episode[r.episode];
      e.first += r.loss;
      e.second += 1;
    }
    Series rs{labels[k], {}}, ls{labels[k], {}};
    for (const auto& [_, acc] : by_tick) rs.y.push_back(acc.first / acc.second);
    for (const auto& [_, acc] : by_episode) ls.y.push_back(acc.first / acc.second);
    ratio.series.push_back(std::move(rs));
    loss.series.push_back(std::move(ls));
  }
  return {ratio, loss};
}

/// Writes cum_ratio.svg and loss.svg under `out_dir`. Nothing is written if
/// any series is empty or lengths disagree.
inline std::vector<std::filesystem::path> render_svg(
    const std::vector<std::filesystem::path>& per_tick_paths,
    const std::vector<std::string>& labels,
    const std::filesystem::path& out_dir) {
  const auto [ratio, loss] = charts_from_per_tick(per_tick_paths, labels);
  const std::string ratio_svg = render_chart(ratio);
  const std::string loss_svg = render_chart(loss);
  detail::ensure_dir(out_dir);
  std::vector<std::filesystem::path> out{out_dir / "cum_ratio.svg",
                                         out_dir / "loss.svg"};
  detail::open_for_write(out[0]) << ratio_svg;
  detail::open_for_write(out[1]) << loss_svg;
  return out;
}

}  // namespace qboost

#endif  // QBOOST_REPORT_HPP
