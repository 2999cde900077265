#ifndef QBOOST_NET_HPP
#define QBOOST_NET_HPP

#include <qboost/types.hpp>

#include <json.hpp>

#include <array>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <random>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace qboost {

inline constexpr Index kFeatureDim = 4;
inline constexpr Index kHidden1 = 32;
inline constexpr Index kHidden2 = 16;
inline constexpr double kOutputFloor = 0.01;
inline constexpr double kInitGain = 0.01;

/// One full set of network-shaped arrays. Used for weights, gradients and
/// both Adam moments.
struct Tensors {
  Matrix W1 = Matrix::Zero(kFeatureDim, kHidden1);
  Vector b1 = Vector::Zero(kHidden1);
  Matrix W2 = Matrix::Zero(kHidden1, kHidden2);
  Vector b2 = Vector::Zero(kHidden2);
  Matrix W3 = Matrix::Zero(kHidden2, 1);
  Vector b3 = Vector::Zero(1);

  static constexpr std::array<std::string_view, 6> kNames = {
      "W1", "b1", "W2", "b2", "W3", "b3"};

  // Visits (name, dense storage) in a fixed order.
  template <class F>
  void for_each(F&& f) {
    f(kNames[0], W1);
    f(kNames[1], b1);
    f(kNames[2], W2);
    f(kNames[3], b2);
    f(kNames[4], W3);
    f(kNames[5], b3);
  }
  template <class F>
  void for_each(F&& f) const {
    f(kNames[0], W1);
    f(kNames[1], b1);
    f(kNames[2], W2);
    f(kNames[3], b2);
    f(kNames[4], W3);
    f(kNames[5], b3);
  }

  double squared_norm() const {
    double s = 0.0;
    for_each([&](std::string_view, const auto& t) { s += t.squaredNorm(); });
    return s;
  }

  Index size() const {
    Index s = 0;
    for_each([&](std::string_view, const auto& t) { s += t.size(); });
    return s;
  }

  friend bool operator==(const Tensors& a, const Tensors& b) {
    return a.W1 == b.W1 && a.b1 == b.b1 && a.W2 == b.W2 && a.b2 == b.b2 &&
           a.W3 == b.W3 && a.b3 == b.b3;
  }
};

struct PredictorParams {
  Tensors weights;
  Tensors adam_m;
  Tensors adam_v;
  std::int64_t step_count = 0;
  double lr = 1e-4;
  double dropout_p = 0.2;
  std::uint64_t seed = 0;
};

/// Xavier-uniform weights scaled by `gain`, zero biases, zero Adam state.
inline PredictorParams init_params(std::uint64_t seed,
                                   double gain = kInitGain) {
  PredictorParams p;
  p.seed = seed;
  std::mt19937_64 rng(seed);
  auto xavier = [&](Matrix& w) {
    const double fan = static_cast<double>(w.rows() + w.cols());
    const double bound = gain * std::sqrt(6.0 / fan);
    std::uniform_real_distribution<double> u(-bound, bound);
    for (Index c = 0; c < w.cols(); ++c)
      for (Index r = 0; r < w.rows(); ++r) w(r, c) = u(rng);
  };
  xavier(p.weights.W1);
  xavier(p.weights.W2);
  xavier(p.weights.W3);
  return p;
}

/// Activations cached by `forward` for the matching `backward` call.
struct ForwardTape {
  Matrix input;  // rows x 4
  Matrix pre1, mask1, h1;
  Matrix pre2, mask2, h2;
  Vector pre3;
};

struct ForwardResult {
  Vector raw_boosts;
  ForwardTape tape;
};

namespace detail {

inline double softplus(double x) {
  return std::log1p(std::exp(-std::abs(x))) + std::max(x, 0.0);
}

inline double sigmoid(double x) {
  if (x >= 0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline Matrix dropout_mask(Index rows, Index cols, double p, bool train,
                           std::mt19937_64& rng) {
  if (!train || p <= 0.0) return Matrix::Ones(rows, cols);
  std::bernoulli_distribution keep(1.0 - p);
  const double scale = 1.0 / (1.0 - p);
  Matrix mask(rows, cols);
  for (Index r = 0; r < rows; ++r)
    for (Index c = 0; c < cols; ++c) mask(r, c) = keep(rng) ? scale : 0.0;
  return mask;
}

}  // namespace detail

/// 4 -> 32 -> 16 -> 1 MLP with ReLU + inverted dropout on both hidden
/// layers and a softplus(.) + 0.01 head. One raw boost per feature row.
inline ForwardResult forward(const PredictorParams& params,
                             const Matrix& features, bool train,
                             std::mt19937_64& rng) {
  detail::require(features.cols() == kFeatureDim,
                  "features must have 4 columns");
  if (!detail::all_finite(features)) {
    throw ValidationError("non-finite features");
  }
  const Tensors& w = params.weights;
  ForwardResult out;
  ForwardTape& t = out.tape;
  const Index rows = features.rows();

  t.input = features;
  t.pre1 = (features * w.W1).rowwise() + w.b1.transpose();
  t.mask1 = detail::dropout_mask(rows, kHidden1, params.dropout_p, train, rng);
  t.h1 = t.pre1.cwiseMax(0.0).cwiseProduct(t.mask1);
  t.pre2 = (t.h1 * w.W2).rowwise() + w.b2.transpose();
  t.mask2 = detail::dropout_mask(rows, kHidden2, params.dropout_p, train, rng);
  t.h2 = t.pre2.cwiseMax(0.0).cwiseProduct(t.mask2);
  t.pre3 = (t.h2 * w.W3).col(0).array() + w.b3(0);

  out.raw_boosts = t.pre3.unaryExpr(
      [](double x) { return detail::softplus(x) + kOutputFloor; });
  return out;
}

/// Gradient of dot(raw_boosts, upstream) with respect to every weight.
inline Tensors backward(const PredictorParams& params, const ForwardTape& tape,
                        const Vector& upstream) {
  const Tensors& w = params.weights;
  const Index rows = tape.input.rows();
  if (upstream.size() != rows || tape.pre1.rows() != rows ||
      tape.pre1.cols() != w.W1.cols() || tape.pre2.cols() != w.W2.cols() ||
      tape.pre3.size() != rows) {
    throw ValidationError("tape does not match params/upstream");
  }

  Tensors g;
  const Vector d3 = upstream.array() *
                    tape.pre3.unaryExpr([](double x) {
                      return detail::sigmoid(x);
                    }).array();
  g.W3 = tape.h2.transpose() * d3;
  g.b3(0) = d3.sum();

  Matrix d2 = (d3 * w.W3.transpose()).cwiseProduct(tape.mask2);
  d2 = d2.array() * (tape.pre2.array() > 0.0).cast<double>();
  g.W2 = tape.h1.transpose() * d2;
  g.b2 = d2.colwise().sum().transpose();

  Matrix d1 = (d2 * w.W2.transpose()).cwiseProduct(tape.mask1);
  d1 = d1.array() * (tape.pre1.array() > 0.0).cast<double>();
  g.W1 = tape.input.transpose() * d1;
  g.b1 = d1.colwise().sum().transpose();
  return g;
}

struct StepReport {
  double grad_norm_sq = 0.0;  // total gradient, L2 included, before clipping
  bool clipped = false;
};

inline constexpr double kAdamBeta1 = 0.9;
inline constexpr double kAdamBeta2 = 0.999;
inline constexpr double kAdamEps = 1e-8;

/// Adds the 2*lambda*theta penalty gradient, clips to `clip_norm` (off when
/// <= 0) and applies one bias-corrected Adam step at params.lr.
inline StepReport optimizer_step(PredictorParams& params, Tensors grads,
                                 double l2_lambda, double clip_norm) {
  StepReport report;
  if (l2_lambda != 0.0) {
    grads.W1 += 2.0 * l2_lambda * params.weights.W1;
    grads.b1 += 2.0 * l2_lambda * params.weights.b1;
    grads.W2 += 2.0 * l2_lambda * params.weights.W2;
    grads.b2 += 2.0 * l2_lambda * params.weights.b2;
    grads.W3 += 2.0 * l2_lambda * params.weights.W3;
    grads.b3 += 2.0 * l2_lambda * params.weights.b3;
  }
  report.grad_norm_sq = grads.squared_norm();
  const double norm = std::sqrt(report.grad_norm_sq);
  if (clip_norm > 0.0 && norm > clip_norm) {
    const double scale = clip_norm / norm;
    grads.for_each([&](std::string_view, auto& t) { t *= scale; });
    report.clipped = true;
  }

  params.step_count += 1;
  const double t = static_cast<double>(params.step_count);
  const double c1 = 1.0 - std::pow(kAdamBeta1, t);
  const double c2 = 1.0 - std::pow(kAdamBeta2, t);
  const double lr = params.lr;

  auto update = [&](auto& theta, auto& m, auto& v, const auto& g) {
    m = kAdamBeta1 * m + (1.0 - kAdamBeta1) * g;
    v = kAdamBeta2 * v + (1.0 - kAdamBeta2) * g.cwiseProduct(g);
    theta.array() -= lr * (m.array() / c1) /
                     ((v.array() / c2).sqrt() + kAdamEps);
  };
  Tensors& w = params.weights;
  update(w.W1, params.adam_m.W1, params.adam_v.W1, grads.W1);
  update(w.b1, params.adam_m.b1, params.adam_v.b1, grads.b1);
  update(w.W2, params.adam_m.W2, params.adam_v.W2, grads.W2);
  update(w.b2, params.adam_m.b2, params.adam_v.b2, grads.b2);
  update(w.W3, params.adam_m.W3, params.adam_v.W3, grads.W3);
  update(w.b3, params.adam_m.b3, params.adam_v.b3, grads.b3);
  return report;
}

struct ScheduleDecision {
  bool lr_factor_applied = false;
  bool stop = false;
};

/// Reduce-on-plateau plus early stopping over per-episode losses.
class PlateauMonitor {
 public:
  PlateauMonitor(int lr_patience = 5, int stop_patience = 30,
                 double rel_threshold = 1e-4)
      : lr_patience_(lr_patience),
        stop_patience_(stop_patience),
        threshold_(rel_threshold) {}

  ScheduleDecision observe(double loss) {
    ScheduleDecision d;
    if (!seen_ || loss < best_ - threshold_ * std::abs(best_)) {
      best_ = loss;
      seen_ = true;
      since_lr_ = 0;
      since_best_ = 0;
      return d;
    }
    ++since_lr_;
    ++since_best_;
    if (since_lr_ >= lr_patience_) {
      d.lr_factor_applied = true;
      since_lr_ = 0;
    }
    d.stop = since_best_ >= stop_patience_;
    return d;
  }

 private:
  int lr_patience_;
  int stop_patience_;
  double threshold_;
  double best_ = 0.0;
  bool seen_ = false;
  int since_lr_ = 0;
  int since_best_ = 0;
};

/// Replays `history` and reports the decision for its last entry.
inline ScheduleDecision schedule_and_stop(std::span<const double> history,
                                          int lr_patience = 5,
                                          int stop_patience = 30) {
  detail::require(!history.empty(), "loss history is empty");
  PlateauMonitor monitor(lr_patience, stop_patience);
  ScheduleDecision d;
  for (double loss : history) d = monitor.observe(loss);
  return d;
}

// Model file -------------------------------------------------------------

namespace detail {

inline nlohmann::json tensors_to_json(const Tensors& t) {
  nlohmann::json j = nlohmann::json::object();
  t.for_each([&](std::string_view name, const auto& a) {
    std::vector<double> data(static_cast<std::size_t>(a.size()));
    // Row-major so the array reads like the printed matrix.
    std::size_t k = 0;
    for (Index r = 0; r < a.rows(); ++r)
      for (Index c = 0; c < a.cols(); ++c) data[k++] = a(r, c);
    j[std::string(name)] = {{"shape", {a.rows(), a.cols()}}, {"data", data}};
  });
  return j;
}

inline Tensors tensors_from_json(const nlohmann::json& j) {
  Tensors t;
  t.for_each([&](std::string_view name, auto& a) {
    const std::string key(name);
    if (!j.contains(key)) throw ValidationError("model file missing " + key);
    const auto& e = j.at(key);
    const auto shape = e.at("shape").get<std::vector<Index>>();
    const auto data = e.at("data").get<std::vector<double>>();
    if (shape.size() != 2 || shape[0] != a.rows() || shape[1] != a.cols() ||
        static_cast<Index>(data.size()) != a.size()) {
      throw ValidationError("model file: bad shape for " + key);
    }
    std::size_t k = 0;
    for (Index r = 0; r < a.rows(); ++r)
      for (Index c = 0; c < a.cols(); ++c) a(r, c) = data[k++];
  });
  return t;
}

}  // namespace detail

inline nlohmann::json params_to_json(const PredictorParams& p) {
  return {{"format", "qboost-predictor"},
          {"version", 1},
          {"architecture", {kFeatureDim, kHidden1, kHidden2, 1}},
          {"seed", p.seed},
          {"step_count", p.step_count},
          {"lr", p.lr},
          {"dropout_p", p.dropout_p},
          {"weights", detail::tensors_to_json(p.weights)},
          {"adam_m", detail::tensors_to_json(p.adam_m)},
          {"adam_v", detail::tensors_to_json(p.adam_v)}};
}

inline PredictorParams params_from_json(const nlohmann::json& j) {
  try {
    if (j.value("format", std::string()) != "qboost-predictor") {
      throw ValidationError("not a qboost model file");
    }
    PredictorParams p;
    p.seed = j.at("seed").get<std::uint64_t>();
    p.step_count = j.at("step_count").get<std::int64_t>();
    p.lr = j.at("lr").get<double>();
    p.dropout_p = j.at("dropout_p").get<double>();
    p.weights = detail::tensors_from_json(j.at("weights"));
    p.adam_m = detail::tensors_from_json(j.at("adam_m"));
    p.adam_v = detail::tensors_from_json(j.at("adam_v"));
    return p;
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(std::string("model file: ") + e.what());
  }
}

}  // namespace qboost

#endif  // QBOOST_NET_HPP
