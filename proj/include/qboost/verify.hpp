#ifndef QBOOST_VERIFY_HPP
#define QBOOST_VERIFY_HPP

#include <qboost/auction.hpp>
#include <qboost/boost.hpp>
#include <qboost/net.hpp>
#include <qboost/surrogate.hpp>

#include <chrono>
#include <cstdint>
#include <random>
#include <sstream>
#include <string>
#include <vector>

namespace qboost::verify {

/// One asserted property inside a suite.
struct Check {
  std::string name;
  long trials = 0;
  long passed = 0;
  double worst = 0.0;  // largest violation / error seen, property-specific
  std::string first_failure;

  Check(std::string n = {}) : name(std::move(n)) {}

  bool ok() const { return trials > 0 && passed == trials; }
  void record(bool pass, double err, const std::string& what) {
    ++trials;
    worst = std::max(worst, err);
    if (pass) {
      ++passed;
    } else if (first_failure.empty()) {
      first_failure = what;
    }
  }
};

struct SuiteReport {
  std::string suite;
  std::vector<Check> checks;
  double seconds = 0.0;

  bool ok() const {
    for (const auto& c : checks)
      if (!c.ok()) return false;
    return !checks.empty();
  }

  std::string summary() const {
    std::ostringstream os;
    for (const auto& c : checks) {
      os << "suite=" << suite << " check=" << c.name << " trials=" << c.trials
         << " passed=" << c.passed << " failed=" << c.trials - c.passed
         << " worst=" << c.worst << '\n';
      if (!c.first_failure.empty())
        os << "  first failure: " << c.first_failure << '\n';
    }
    os << "suite=" << suite << " result=" << (ok() ? "PASS" : "FAIL")
       << " time=" << seconds << "s\n";
    return os.str();
  }
};

namespace detail {

using Rng = std::mt19937_64;

inline Matrix uniform(Rng& rng, Index rows, Index cols, double lo, double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  Matrix m(rows, cols);
  for (Index c = 0; c < cols; ++c)
    for (Index r = 0; r < rows; ++r) m(r, c) = u(rng);
  return m;
}

inline Index uniform_count(Rng& rng, Index lo, Index hi) {
  return std::uniform_int_distribution<Index>(lo, hi)(rng);
}

inline TickState rich_state(const Matrix& v, const Matrix& q) {
  TickState s;
  s.values = v;
  s.qualities = q;
  s.budgets = Vector::Constant(v.rows(), 1e12);
  s.rois = Vector::Ones(v.rows());
  s.conv_prob = Matrix::Zero(v.rows(), v.cols());
  return s;
}

// Exhaustive optimum over all n^m assignments of impressions to advertisers,
// with liquid (budget-capped) commercial welfare.
inline double brute_force_optimum(const Matrix& v, const Matrix& q,
                                  const Vector& budgets) {
  const Index n = v.rows();
  const Index m = v.cols();
  std::vector<Index> who(static_cast<std::size_t>(m), 0);
  double best = 0.0;
  while (true) {
    Vector won = Vector::Zero(n);
    double quality = 0.0;
    for (Index j = 0; j < m; ++j) {
      const Index i = who[static_cast<std::size_t>(j)];
      won(i) += v(i, j);
      quality += q(i, j);
    }
    double liquid = 0.0;
    for (Index i = 0; i < n; ++i) liquid += std::min(budgets(i), won(i));
    best = std::max(best, liquid + quality);
    Index k = 0;
    while (k < m && ++who[static_cast<std::size_t>(k)] == n) {
      who[static_cast<std::size_t>(k)] = 0;
      ++k;
    }
    if (k == m) break;
  }
  return best;
}

inline double relative_error(const Vector& a, const Vector& f) {
  return (a - f).norm() / std::max(f.norm(), 1e-12);
}

template <class F>
Matrix central_difference(const Matrix& x, double h, F&& f) {
  Matrix g(x.rows(), x.cols());
  Matrix xp = x;
  for (Index c = 0; c < x.cols(); ++c) {
    for (Index r = 0; r < x.rows(); ++r) {
      const double keep = xp(r, c);
      xp(r, c) = keep + h;
      const double up = f(xp);
      xp(r, c) = keep - h;
      const double dn = f(xp);
      xp(r, c) = keep;
      g(r, c) = (up - dn) / (2 * h);
    }
  }
  return g;
}

// Smallest distance of any lift decision in `project` from its switch point.
inline double projection_kink_margin(const Matrix& raw, const Matrix& vq,
                                     double c) {
  double margin = std::numeric_limits<double>::infinity();
  for (Index j = 0; j < raw.cols(); ++j) {
    const auto order = rank_by_value_quality(vq, j);
    double prev = 0.0;
    for (std::size_t k = 1; k < order.size(); ++k) {
      const double inc = c * (vq(order[k], j) - vq(order[k - 1], j));
      const double slack = raw(order[k], j) - prev - inc;
      margin = std::min(margin, std::abs(slack));
      prev = slack < 0 ? prev + inc : raw(order[k], j);
    }
  }
  return margin;
}

inline std::string where(long trial) {
  return "trial " + std::to_string(trial);
}

}  // namespace detail

inline constexpr double kFeasibilityTol = 1e-9;

/// Feasibility and idempotence of the projection on random instances.
inline SuiteReport projection_suite(long trials, std::uint64_t seed = 1) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep{"projection", {{"feasible"}, {"idempotent"}}, 0.0};
  constexpr double kFactors[] = {0.0, 0.5, 2.0, 4.0};
  for (long k = 0; k < trials; ++k) {
    detail::Rng rng(seed * 7919 + static_cast<std::uint64_t>(k));
    const Index n = detail::uniform_count(rng, 1, 16);
    const Index m = detail::uniform_count(rng, 1, 8);
    const double c = kFactors[k % 4];
    Matrix v = detail::uniform(rng, n, m, 0.0, 2.0);
    Matrix q = detail::uniform(rng, n, m, 0.0, 1.0);
    // Exact ties in v + q on some instances.
    if (n > 1 && k % 5 == 0) {
      v.row(n - 1) = v.row(0);
      q.row(n - 1) = q.row(0);
    }
    const Matrix raw = detail::uniform(rng, n, m, -1.0, 3.0);
    const Matrix z = project(raw, v, q, c).z;
    rep.checks[0].record(is_c_competitive(z, v, q, c, kFeasibilityTol), 0.0,
                         detail::where(k));
    const Matrix zz = project(z, v, q, c).z;
    const double diff = (zz - z).cwiseAbs().maxCoeff();
    rep.checks[1].record(diff == 0.0, diff, detail::where(k));
  }
  rep.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Welfare of the boosted auction against a brute-force optimum, for
/// bidders with multipliers in [gamma, 1] and non-binding budgets.
inline SuiteReport efficiency_bound_suite(long trials, std::uint64_t seed = 2) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep{"efficiency-bound", {{"ratio>=bound"}}, 0.0};
  constexpr double kEta[] = {0.6, 0.75};
  constexpr double kGamma[] = {0.3, 1.0};
  for (long k = 0; k < trials; ++k) {
    detail::Rng rng(seed * 104729 + static_cast<std::uint64_t>(k));
    const double eta = kEta[k % 2];
    const double gamma = kGamma[(k / 2) % 2];
    const Index n = detail::uniform_count(rng, 1, 4);
    const Index m = detail::uniform_count(rng, 1, 3);
    const Matrix v = detail::uniform(rng, n, m, 0.01, 1.0);
    const Matrix q = detail::uniform(rng, n, m, 0.0, 1.0);
    const Vector kappa = detail::uniform(rng, n, 1, gamma, 1.0).col(0);
    const Matrix bids = kappa.asDiagonal() * v;
    const double c = competitive_factor(eta, gamma);
    const Matrix raw = detail::uniform(rng, n, m, 0.0, 2.0);
    const Matrix z = project(raw, v, q, c).z;

    const TickState s = detail::rich_state(v, q);
    const double got = welfare(s, run_auction(s, bids, z)).total;
    const double opt = detail::brute_force_optimum(v, q, s.budgets);
    const double bound = efficiency_bound(c, gamma);
    const double ratio = got / opt;
    std::ostringstream what;
    what << detail::where(k) << ": eta=" << eta << " gamma=" << gamma
         << " ratio=" << ratio << " bound=" << bound;
    rep.checks[0].record(ratio >= bound - 1e-9, std::max(0.0, bound - ratio),
                         what.str());
  }
  rep.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0).count();
  return rep;
}

/// Hard minus soft welfare against 2 m tau ln n.
///
/// "projected": truthful bids, boosts from `project`; both 0 <= gap and
/// gap <= bound are asserted. "arbitrary": truthful bids, unprojected
/// non-negative boosts; only the upper bound is asserted.
inline SuiteReport surrogate_gap_suite(long trials, std::uint64_t seed = 3) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep{"surrogate-gap",
                  {{"projected:gap>=0"},
                   {"projected:gap<=bound"},
                   {"arbitrary:gap<=bound"}},
                  0.0};
  constexpr double kTau[] = {0.01, 0.1, 0.5};
  constexpr double kEta[] = {0.6, 0.75};
  for (long k = 0; k < trials; ++k) {
    detail::Rng rng(seed * 15485863 + static_cast<std::uint64_t>(k));
    const double tau = kTau[k % 3];
    const Index n = detail::uniform_count(rng, 1, 8);
    const Index m = detail::uniform_count(rng, 1, 8);
    const Matrix v = detail::uniform(rng, n, m, 0.0, 2.0);
    const Matrix q = detail::uniform(rng, n, m, 0.0, 1.0);
    const double c = competitive_factor(kEta[(k / 3) % 2], 1.0);
    const double bound = surrogate_gap_bound(m, n, tau);
    const TickState s = detail::rich_state(v, q);

    auto gap_for = [&](const Matrix& z) {
      const double hard = welfare(s, run_auction(s, v, z)).total;
      return hard - soft_welfare(v, q, z, v, tau).value;
    };
    std::ostringstream what;
    what << detail::where(k) << ": n=" << n << " m=" << m << " tau=" << tau;

    const Matrix zp = project(detail::uniform(rng, n, m, -1.0, 2.0), v, q, c).z;
    const double gp = gap_for(zp);
    rep.checks[0].record(gp >= -1e-9, std::max(0.0, -gp),
                         what.str() + " gap=" + std::to_string(gp));
    rep.checks[1].record(gp <= bound + 1e-9, std::max(0.0, gp - bound),
                         what.str() + " gap=" + std::to_string(gp));

    const Matrix za = detail::uniform(rng, n, m, 0.0, 2.0);
    const double ga = gap_for(za);
    rep.checks[2].record(ga <= bound + 1e-9, std::max(0.0, ga - bound),
                         what.str() + " gap=" + std::to_string(ga) +
                             " bound=" + std::to_string(bound));
  }
  rep.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline constexpr double kFdStep = 1e-5;
inline constexpr double kGradRelTol = 1e-4;
inline constexpr double kVjpAbsTol = 1e-6;
inline constexpr double kKinkMargin = 1e-4;

/// Analytic gradients against central finite differences.
inline SuiteReport gradients_suite(long trials, std::uint64_t seed = 4) {
  const auto t0 = std::chrono::steady_clock::now();
  SuiteReport rep{"gradients",
                  {{"soft_welfare_grad_z"}, {"mlp_backward"}, {"project_vjp"}},
                  0.0};
  for (long k = 0; k < trials; ++k) {
    detail::Rng rng(seed * 32452843 + static_cast<std::uint64_t>(k));
    const std::string at = detail::where(k);

    // Surrogate.
    {
      const Index n = detail::uniform_count(rng, 2, 8);
      const Index m = detail::uniform_count(rng, 1, 6);
      const double tau = std::uniform_real_distribution<double>(0.1, 1.0)(rng);
      const Matrix b = detail::uniform(rng, n, m, 0.0, 2.0);
      const Matrix q = detail::uniform(rng, n, m, 0.0, 1.0);
      const Matrix v = detail::uniform(rng, n, m, 0.0, 2.0);
      const Matrix z = detail::uniform(rng, n, m, 0.0, 1.0);
      const Matrix g = soft_welfare_grad_z(b, q, z, v, tau);
      const Matrix fd = detail::central_difference(z, kFdStep, [&](const Matrix& zz) {
        return soft_welfare(b, q, zz, v, tau).value;
      });
      const double err = detail::relative_error(g.reshaped(), fd.reshaped());
      rep.checks[0].record(err < kGradRelTol, err, at);
    }

    // MLP, eval mode, away from ReLU kinks.
    {
      PredictorParams p = init_params(seed + static_cast<std::uint64_t>(k), 1.0);
      std::normal_distribution<double> nb(0.0, 0.1);
      for (Index i = 0; i < p.weights.b1.size(); ++i) p.weights.b1(i) = nb(rng);
      for (Index i = 0; i < p.weights.b2.size(); ++i) p.weights.b2(i) = nb(rng);
      p.weights.b3(0) = nb(rng);
      const Index rows = detail::uniform_count(rng, 1, 12);
      std::mt19937_64 unused(0);
      Matrix x;
      ForwardResult fw;
      for (int attempt = 0; attempt < 100; ++attempt) {
        x = detail::uniform(rng, rows, kFeatureDim, -2.0, 2.0);
        fw = forward(p, x, false, unused);
        const double margin = std::min(fw.tape.pre1.cwiseAbs().minCoeff(),
                                       fw.tape.pre2.cwiseAbs().minCoeff());
        if (margin > kKinkMargin) break;
      }
      const Vector up = detail::uniform(rng, rows, 1, -1.0, 1.0).col(0);
      const Tensors g = backward(p, fw.tape, up);

      std::vector<double> analytic, numeric;
      auto objective = [&](const PredictorParams& pp) {
        return forward(pp, x, false, unused).raw_boosts.dot(up);
      };
      PredictorParams probe = p;
      auto visit = [&](auto& tensor, const auto& grad) {
        for (Index i = 0; i < tensor.size(); ++i) {
          const double keep = tensor.data()[i];
          tensor.data()[i] = keep + kFdStep;
          const double a = objective(probe);
          tensor.data()[i] = keep - kFdStep;
          const double b = objective(probe);
          tensor.data()[i] = keep;
          numeric.push_back((a - b) / (2 * kFdStep));
          analytic.push_back(grad.data()[i]);
        }
      };
      visit(probe.weights.W1, g.W1);
      visit(probe.weights.b1, g.b1);
      visit(probe.weights.W2, g.W2);
      visit(probe.weights.b2, g.b2);
      visit(probe.weights.W3, g.W3);
      visit(probe.weights.b3, g.b3);
      const Eigen::Map<const Vector> av(analytic.data(),
                                        static_cast<Index>(analytic.size()));
      const Eigen::Map<const Vector> nv(numeric.data(),
                                        static_cast<Index>(numeric.size()));
      const double err = detail::relative_error(av, nv);
      rep.checks[1].record(err < kGradRelTol, err, at);
    }

    // Projection VJP, away from lift/keep switch points.
    {
      const Index n = detail::uniform_count(rng, 1, 10);
      const Index m = detail::uniform_count(rng, 1, 5);
      const double c = std::uniform_real_distribution<double>(0.0, 3.0)(rng);
      const Matrix v = detail::uniform(rng, n, m, 0.0, 2.0);
      const Matrix q = detail::uniform(rng, n, m, 0.0, 1.0);
      Matrix raw;
      for (int attempt = 0; attempt < 1000; ++attempt) {
        raw = detail::uniform(rng, n, m, -1.0, 4.0);
        if (detail::projection_kink_margin(raw, v + q, c) > kKinkMargin) break;
      }
      const Matrix up = detail::uniform(rng, n, m, -1.0, 1.0);
      const Matrix g = project_vjp(raw, v, q, c, up);
      const Matrix fd = detail::central_difference(raw, kFdStep, [&](const Matrix& r) {
        return (project(r, v, q, c).z.array() * up.array()).sum();
      });
      const double err = (g - fd).cwiseAbs().maxCoeff();
      rep.checks[2].record(err <= kVjpAbsTol, err, at);
    }
  }
  rep.seconds = std::chrono::duration<double>(
                    std::chrono::steady_clock::now() - t0).count();
  return rep;
}

inline SuiteReport run_suite(const std::string& name, long trials,
                             std::uint64_t seed = 0) {
  qboost::detail::require(trials > 0, "trials must be > 0");
  if (name == "projection") return projection_suite(trials, seed + 1);
  if (name == "efficiency-bound") return efficiency_bound_suite(trials, seed + 2);
  if (name == "surrogate-gap") return surrogate_gap_suite(trials, seed + 3);
  if (name == "gradients") return gradients_suite(trials, seed + 4);
  throw ValidationError("unknown verify suite '" + name + "'");
}

}  // namespace qboost::verify

#endif  // QBOOST_VERIFY_HPP
