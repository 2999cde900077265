#include <qboost/boost.hpp>

#include <gtest/gtest.h>

#include <random>

using namespace qboost;

TEST(CompetitiveFactor, ClosedForms) {
  EXPECT_DOUBLE_EQ(competitive_factor(0.75, 1.0), 2.0);
  EXPECT_DOUBLE_EQ(competitive_factor(0.75, 1.5), 2.0);
  EXPECT_DOUBLE_EQ(competitive_factor(0.75, 0.5), 2.5);
  EXPECT_DOUBLE_EQ(competitive_factor(0.6, 0.3), 1.2);
  EXPECT_DOUBLE_EQ(competitive_factor(0.5, 1.0), 0.0);
  EXPECT_DOUBLE_EQ(competitive_factor(0.0, 0.5), 0.0);  // clamped
  EXPECT_THROW(competitive_factor(1.0, 1.0), ValidationError);
  EXPECT_THROW(competitive_factor(-0.1, 1.0), ValidationError);
}

TEST(CompetitiveFactor, UnclampedBoundRecoversEta) {
  for (double eta : {0.55, 0.6, 0.75, 0.9}) {
    for (double gamma : {0.2, 0.3, 0.7, 1.0, 2.0}) {
      const double c = competitive_factor(eta, gamma);
      if (c > 0) {
        EXPECT_NEAR(efficiency_bound(c, gamma), eta, 1e-12);
      }
    }
  }
}

TEST(EfficiencyBound, ClosedForms) {
  EXPECT_DOUBLE_EQ(efficiency_bound(2.0, 1.0), 0.75);
  EXPECT_DOUBLE_EQ(efficiency_bound(0.0, 1.0), 0.5);
  EXPECT_DOUBLE_EQ(efficiency_bound(1.0, 0.5), 0.6);
}

TEST(Projection, HandWorkedLift) {
  Matrix vq(3, 1), raw(3, 1);
  vq << 1.0, 2.0, 3.0;
  raw << 5.0, 0.0, 0.0;
  const Matrix z = project(raw, vq, Matrix::Zero(3, 1), 1.0).z;
  EXPECT_DOUBLE_EQ(z(0), 0.0);
  EXPECT_DOUBLE_EQ(z(1), 1.0);
  EXPECT_DOUBLE_EQ(z(2), 2.0);
}

TEST(Projection, KeepsFeasibleEntries) {
  Matrix v(3, 1), raw(3, 1);
  v << 3.0, 1.0, 2.0;  // ranks: 1, 2, 0
  raw << 9.0, 0.7, 4.0;
  const Matrix z = project(raw, v, Matrix::Zero(3, 1), 2.0).z;
  EXPECT_DOUBLE_EQ(z(1), 0.0);  // lowest
  EXPECT_DOUBLE_EQ(z(2), 4.0);  // 4 - 0 >= 2
  EXPECT_DOUBLE_EQ(z(0), 9.0);  // 9 - 4 >= 2
}

TEST(Projection, EqualValuesNeedNoIncrement) {
  Matrix v = Matrix::Constant(3, 1, 1.0);
  Matrix raw(3, 1);
  raw << 0.3, 0.1, 0.2;
  const Matrix z = project(raw, v, Matrix::Zero(3, 1), 4.0).z;
  // stable order 0, 1, 2: z0 = 0, then each must not fall below its predecessor
  EXPECT_DOUBLE_EQ(z(0), 0.0);
  EXPECT_DOUBLE_EQ(z(1), 0.1);
  EXPECT_DOUBLE_EQ(z(2), 0.2);
  EXPECT_TRUE(is_c_competitive(z, v, Matrix::Zero(3, 1), 4.0));
}

TEST(Projection, ZeroFactorOnlyEnforcesMonotonicity) {
  Matrix v(2, 1), raw(2, 1);
  v << 1.0, 2.0;
  raw << 0.4, 0.2;
  const Matrix z = project(raw, v, Matrix::Zero(2, 1), 0.0).z;
  EXPECT_DOUBLE_EQ(z(0), 0.0);
  EXPECT_DOUBLE_EQ(z(1), 0.2);
}

TEST(Projection, RejectsBadInput) {
  const Matrix ok = Matrix::Ones(2, 2);
  EXPECT_THROW(project(ok, Matrix::Ones(2, 3), ok, 1.0), ValidationError);
  EXPECT_THROW(project(ok, ok, ok, -1.0), ValidationError);
  Matrix nan = ok;
  nan(0, 0) = std::nan("");
  EXPECT_THROW(project(nan, ok, ok, 1.0), ValidationError);
}

TEST(Competitive, DetectsViolations) {
  Matrix v(2, 1), z(2, 1);
  v << 1.0, 2.0;
  z << 0.0, 0.99;
  EXPECT_FALSE(is_c_competitive(z, v, Matrix::Zero(2, 1), 1.0));
  z(1) = 1.0;
  EXPECT_TRUE(is_c_competitive(z, v, Matrix::Zero(2, 1), 1.0));
  z(0) = 0.1;  // lowest must be exactly zero
  EXPECT_FALSE(is_c_competitive(z, v, Matrix::Zero(2, 1), 1.0));
}

namespace {

struct Instance {
  Matrix raw, v, q;
  double c;
};

Instance random_instance(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> size(1, 9);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  const double factors[] = {0.0, 0.5, 2.0, 4.0};
  Instance in;
  const Index n = size(rng), m = size(rng);
  in.raw.resize(n, m);
  in.v.resize(n, m);
  in.q.resize(n, m);
  for (Index k = 0; k < in.raw.size(); ++k) {
    in.raw(k) = 3.0 * u(rng) - 1.0;
    in.v(k) = u(rng);
    in.q(k) = 0.3 * u(rng);
  }
  in.c = factors[std::uniform_int_distribution<int>(0, 3)(rng)];
  return in;
}

}  // namespace

TEST(ProjectionProperty, FeasibleIdempotentAndDominating) {
  std::mt19937_64 rng(5);
  for (int t = 0; t < 2000; ++t) {
    const auto in = random_instance(rng);
    const Matrix z = project(in.raw, in.v, in.q, in.c).z;
    ASSERT_TRUE(is_c_competitive(z, in.v, in.q, in.c));
    ASSERT_EQ(project(z, in.v, in.q, in.c).z, z);
    const Matrix vq = in.v + in.q;
    for (Index j = 0; j < z.cols(); ++j) {
      const auto order = rank_by_value_quality(vq, j);
      for (std::size_t k = 1; k < order.size(); ++k)
        ASSERT_GE(z(order[k], j), in.raw(order[k], j));
    }
  }
}

TEST(ProjectionVjp, RoutesThroughLiftChain) {
  Matrix vq(3, 1), raw(3, 1), up(3, 1);
  vq << 1.0, 2.0, 3.0;
  raw << 0.0, 5.0, 0.0;  // 1 kept, 2 lifted onto 1
  up << 10.0, 1.0, 2.0;
  const Matrix g = project_vjp(raw, vq, Matrix::Zero(3, 1), 1.0, up);
  EXPECT_DOUBLE_EQ(g(0), 0.0);
  EXPECT_DOUBLE_EQ(g(1), 3.0);
  EXPECT_DOUBLE_EQ(g(2), 0.0);
}

TEST(ProjectionVjp, AllLiftedGivesZero) {
  Matrix vq(3, 1);
  vq << 1.0, 2.0, 3.0;
  const Matrix raw = Matrix::Constant(3, 1, 0.5);
  const Matrix g = project_vjp(raw, vq, Matrix::Zero(3, 1), 2.0,
                               Matrix::Ones(3, 1));
  EXPECT_EQ(g, Matrix::Zero(3, 1));
}

TEST(ProjectionVjpProperty, MatchesFiniteDifferencesAwayFromKinks) {
  std::mt19937_64 rng(6);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  int compared = 0;
  for (int t = 0; t < 300; ++t) {
    const auto in = random_instance(rng);
    Matrix up(in.raw.rows(), in.raw.cols());
    for (Index k = 0; k < up.size(); ++k) up(k) = u(rng);
    const Matrix g = project_vjp(in.raw, in.v, in.q, in.c, up);
    const double h = 1e-6;
    bool near_kink = false;
    Matrix fd(in.raw.rows(), in.raw.cols());
    for (Index k = 0; k < in.raw.size() && !near_kink; ++k) {
      Matrix p = in.raw, m = in.raw;
      p(k) += h;
      m(k) -= h;
      const Matrix zp = project(p, in.v, in.q, in.c).z;
      const Matrix zm = project(m, in.v, in.q, in.c).z;
      fd(k) = ((zp - zm).array() * up.array()).sum() / (2 * h);
      // a kink shows up as a Jacobian column that is not 0/1-valued
      const Matrix col = (zp - zm) / (2 * h);
      for (Index r = 0; r < col.size(); ++r) {
        const double x = col(r);
        if (std::abs(x) > 1e-6 && std::abs(x - 1.0) > 1e-6) near_kink = true;
      }
    }
    if (near_kink) continue;
    ++compared;
    ASSERT_LE((g - fd).cwiseAbs().maxCoeff(), 1e-6) << "trial " << t;
  }
  EXPECT_GT(compared, 200);
}
