#include <qboost/net.hpp>

#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

using namespace qboost;

namespace {

Matrix random_features(Index rows, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> u(0.0, 2.0);
  Matrix f(rows, kFeatureDim);
  for (Index k = 0; k < f.size(); ++k) f(k) = u(rng);
  return f;
}

}  // namespace

TEST(Init, XavierScaledWeightsAndZeroBiases) {
  const auto p = init_params(3);
  EXPECT_EQ(p.weights.size(), 4 * 32 + 32 + 32 * 16 + 16 + 16 + 1);
  const double b1 = 0.01 * std::sqrt(6.0 / (4 + 32));
  EXPECT_LE(p.weights.W1.cwiseAbs().maxCoeff(), b1);
  EXPECT_GT(p.weights.W1.cwiseAbs().maxCoeff(), 0.5 * b1);
  EXPECT_EQ(p.weights.b1, Vector::Zero(32));
  EXPECT_EQ(p.weights.b3, Vector::Zero(1));
  EXPECT_EQ(p.adam_m.squared_norm(), 0.0);
  EXPECT_EQ(init_params(3).weights, p.weights);
  EXPECT_FALSE(init_params(4).weights == p.weights);
}

TEST(Forward, OutputsAboveFloor) {
  auto p = init_params(1, 1.0);
  p.weights.b3(0) = -50.0;
  std::mt19937_64 rng(0);
  const auto out = forward(p, random_features(20, 2), false, rng);
  ASSERT_EQ(out.raw_boosts.size(), 20);
  for (Index k = 0; k < 20; ++k) {
    EXPECT_GE(out.raw_boosts(k), kOutputFloor);
    EXPECT_LT(out.raw_boosts(k), kOutputFloor + 1e-6);
  }
}

TEST(Forward, TinyInitGivesSoftplusOfZero) {
  const auto p = init_params(1);
  std::mt19937_64 rng(0);
  const auto out = forward(p, random_features(5, 2), false, rng);
  for (Index k = 0; k < 5; ++k)
    EXPECT_NEAR(out.raw_boosts(k), std::log(2.0) + 0.01, 1e-4);
}

TEST(Forward, EvalModeIsDeterministic) {
  const auto p = init_params(1, 1.0);
  std::mt19937_64 a(1), b(2);
  const Matrix f = random_features(8, 3);
  EXPECT_EQ(forward(p, f, false, a).raw_boosts,
            forward(p, f, false, b).raw_boosts);
}

TEST(Forward, DropoutMasksAreInverted) {
  const auto p = init_params(1, 1.0);
  std::mt19937_64 rng(9);
  const auto out = forward(p, random_features(500, 3), true, rng);
  const Matrix& m = out.tape.mask1;
  double dropped = 0;
  for (Index k = 0; k < m.size(); ++k) {
    ASSERT_TRUE(m(k) == 0.0 || std::abs(m(k) - 1.25) < 1e-15);
    dropped += m(k) == 0.0;
  }
  const double n = static_cast<double>(m.size());
  const double rate = dropped / n;
  EXPECT_NEAR(rate, 0.2, 3 * std::sqrt(0.2 * 0.8 / n));
}

TEST(Forward, RejectsBadFeatures) {
  const auto p = init_params(1);
  std::mt19937_64 rng(0);
  Matrix f = random_features(2, 1);
  f(0, 0) = std::numeric_limits<double>::infinity();
  EXPECT_THROW(forward(p, f, false, rng), ValidationError);
  EXPECT_THROW(forward(p, Matrix::Zero(2, 3), false, rng), ValidationError);
}

TEST(Backward, MatchesFiniteDifferences) {
  auto p = init_params(7, 1.0);
  std::mt19937_64 brng(1);
  std::normal_distribution<double> nd(0.0, 0.3);
  p.weights.for_each([&](std::string_view name, auto& t) {
    if (name[0] == 'b')
      for (Index k = 0; k < t.size(); ++k) t(k) = nd(brng);
  });
  const Matrix f = random_features(6, 8);
  Vector up(6);
  for (Index k = 0; k < 6; ++k) up(k) = nd(brng);
  std::mt19937_64 rng(0);
  const auto fw = forward(p, f, false, rng);
  const Tensors g = backward(p, fw.tape, up);

  auto objective = [&](const PredictorParams& q) {
    std::mt19937_64 r(0);
    return forward(q, f, false, r).raw_boosts.dot(up);
  };
  const double h = 1e-6;
  double worst = 0.0;
  PredictorParams probe = p;
  std::vector<double> analytic, numeric;
  g.for_each([&](std::string_view, const auto& t) {
    for (Index k = 0; k < t.size(); ++k) analytic.push_back(t(k));
  });
  probe.weights.for_each([&](std::string_view, auto& t) {
    for (Index k = 0; k < t.size(); ++k) {
      const double keep = t(k);
      t(k) = keep + h;
      const double fp = objective(probe);
      t(k) = keep - h;
      const double fm = objective(probe);
      t(k) = keep;
      numeric.push_back((fp - fm) / (2 * h));
    }
  });
  ASSERT_EQ(analytic.size(), numeric.size());
  for (std::size_t k = 0; k < analytic.size(); ++k)
    worst = std::max(worst, std::abs(analytic[k] - numeric[k]));
  EXPECT_LT(worst, 1e-6);
}

TEST(Backward, RejectsMismatchedTape) {
  const auto p = init_params(1);
  std::mt19937_64 rng(0);
  const auto fw = forward(p, random_features(3, 1), false, rng);
  EXPECT_THROW(backward(p, fw.tape, Vector::Zero(4)), ValidationError);
}

TEST(Adam, FirstStepMovesByLearningRateTimesSign) {
  auto p = init_params(1);
  const Tensors before = p.weights;
  Tensors g;
  g.W1.setConstant(0.003);
  g.b2.setConstant(-0.002);
  p.lr = 0.01;
  optimizer_step(p, g, 0.0, 0.0);
  // bias-corrected first step: m_hat = g, v_hat = g^2
  EXPECT_NEAR((before.W1 - p.weights.W1).maxCoeff(), 0.01, 1e-7);
  EXPECT_NEAR((before.W1 - p.weights.W1).minCoeff(), 0.01, 1e-7);
  EXPECT_NEAR((p.weights.b2 - before.b2).minCoeff(), 0.01, 1e-7);
  EXPECT_EQ(p.weights.W3, before.W3);
  EXPECT_EQ(p.step_count, 1);
}

TEST(Adam, PenaltyEntersBeforeClipping) {
  auto p = init_params(2, 1.0);
  const double theta_sq = p.weights.squared_norm();
  const auto rep = optimizer_step(p, Tensors{}, 10.0, 1.0);
  // gradient is 2 * lambda * theta alone
  EXPECT_NEAR(rep.grad_norm_sq, 400.0 * theta_sq, 1e-9 * theta_sq);
  EXPECT_TRUE(rep.clipped);
  const double mnorm = std::sqrt(p.adam_m.squared_norm());
  EXPECT_NEAR(mnorm, 0.1 * 1.0, 1e-12);  // (1 - beta1) * clipped gradient
}

TEST(Plateau, HalvesAfterFiveFlatEpisodesStopsAfterThirty) {
  PlateauMonitor mon(5, 30);
  EXPECT_FALSE(mon.observe(10.0).lr_factor_applied);
  int lr_events = 0, stop_at = -1;
  for (int e = 1; e <= 40 && stop_at < 0; ++e) {
    const auto d = mon.observe(10.0);
    lr_events += d.lr_factor_applied;
    if (e == 4) {
      EXPECT_FALSE(d.lr_factor_applied);
    }
    if (e == 5) {
      EXPECT_TRUE(d.lr_factor_applied);
    }
    if (d.stop) stop_at = e;
  }
  EXPECT_EQ(stop_at, 30);
  EXPECT_EQ(lr_events, 6);
}

TEST(Plateau, SmallImprovementsDoNotCount) {
  std::vector<double> h{100.0};
  for (int k = 0; k < 5; ++k) h.push_back(100.0 * (1 - 5e-5));
  EXPECT_TRUE(schedule_and_stop(h).lr_factor_applied);
  h.push_back(h.back() * 0.99);
  EXPECT_FALSE(schedule_and_stop(h).lr_factor_applied);
}

TEST(ModelFile, RoundTripsExactly) {
  auto p = init_params(5, 1.0);
  optimizer_step(p, Tensors{}, 1.0, 1.0);
  p.lr = 3.2e-5;
  const auto j = nlohmann::json::parse(params_to_json(p).dump());
  const auto back = params_from_json(j);
  EXPECT_EQ(back.weights, p.weights);
  EXPECT_EQ(back.adam_m, p.adam_m);
  EXPECT_EQ(back.adam_v, p.adam_v);
  EXPECT_EQ(back.step_count, 1);
  EXPECT_EQ(back.lr, p.lr);
  EXPECT_EQ(back.seed, 5u);
}

TEST(ModelFile, RejectsForeignOrDamagedFiles) {
  EXPECT_THROW(params_from_json(nlohmann::json{{"format", "other"}}),
               ValidationError);
  auto j = params_to_json(init_params(1));
  j["weights"]["W2"]["shape"] = {16, 32};
  EXPECT_THROW(params_from_json(j), ValidationError);
  j = params_to_json(init_params(1));
  j["weights"].erase("b3");
  EXPECT_THROW(params_from_json(j), ValidationError);
}
