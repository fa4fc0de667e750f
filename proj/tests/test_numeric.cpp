#include <gtest/gtest.h>

#include <Eigen/Dense>

#include <cmath>

#include "primfit/numeric.hpp"
#include "primfit/rng.hpp"

using namespace primfit;
using Eigen::Index;
using Eigen::MatrixX3d;
using Eigen::MatrixXd;
using Eigen::VectorXd;

namespace {

MatrixX3d random_x(Rng& rng, Index n) {
  MatrixX3d x(n, 3);
  for (Index i = 0; i < n; ++i) x.row(i) = rng.in_box(1.0).transpose();
  return x;
}

VectorXd random_w(Rng& rng, Index n) {
  VectorXd w(n);
  for (Index i = 0; i < n; ++i) w[i] = rng.uniform(0.1, 1.0);
  return w;
}

// Smallest right singular vector of diag(w)^1/2 X by a dense SVD.
Eigen::Vector3d svd_oracle(const MatrixX3d& x, const VectorXd& w) {
  const MatrixXd a = w.cwiseSqrt().asDiagonal() * x;
  Eigen::JacobiSVD<MatrixXd> svd(a, Eigen::ComputeFullV);
  return svd.matrixV().col(2);
}

// Ridge solution from a QR of the stacked system.
VectorXd ridge_oracle(const MatrixXd& x, const VectorXd& y, const VectorXd& w, double lambda) {
  const Index n = x.rows();
  const Index d = x.cols();
  MatrixXd a(n + d, d);
  VectorXd b(n + d);
  a.topRows(n) = w.cwiseSqrt().asDiagonal() * x;
  a.bottomRows(d) = std::sqrt(lambda) * MatrixXd::Identity(d, d);
  b.head(n) = w.cwiseSqrt().asDiagonal() * y;
  b.tail(d).setZero();
  return a.colPivHouseholderQr().solve(b);
}

double rel(double a, double b) { return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-6}); }

}  // namespace

TEST(HomogeneousLsq, ExactNullspace) {
  MatrixX3d x(4, 3);
  x << 1, 0, 0, 0, 1, 0, 1, 1, 0, -1, 2, 0;
  const auto s = weighted_homogeneous_lsq(x, VectorXd::Ones(4));
  EXPECT_NEAR((s.v - Eigen::Vector3d::UnitZ()).norm(), 0.0, 1e-12);
  EXPECT_NEAR(s.sigma_min, 0.0, 1e-12);
  EXPECT_TRUE(std::isinf(s.cond));
}

TEST(HomogeneousLsq, UniformWeightScaleLeavesSolution) {
  Rng rng(1);
  const auto x = random_x(rng, 30);
  const auto a = weighted_homogeneous_lsq(x, VectorXd::Ones(30));
  const auto b = weighted_homogeneous_lsq(x, VectorXd::Constant(30, 0.5));
  EXPECT_NEAR((a.v - b.v).norm(), 0.0, 1e-12);
}

TEST(HomogeneousLsq, MatchesDenseSvdOracle) {
  Rng rng(2);
  for (int trial = 0; trial < 50; ++trial) {
    const auto x = random_x(rng, 50);
    const auto w = random_w(rng, 50);
    const auto s = weighted_homogeneous_lsq(x, w);
    EXPECT_GT(std::abs(s.v.dot(svd_oracle(x, w))), 1.0 - 1e-10);
    EXPECT_NEAR(s.v.norm(), 1.0, 1e-12);
    // sign convention: first nonzero component positive
    EXPECT_GT(s.v.x(), 0.0);
  }
}

TEST(HomogeneousLsq, ResidualOptimality) {
  Rng rng(3);
  for (int trial = 0; trial < 200; ++trial) {
    const auto x = random_x(rng, 20);
    const auto w = random_w(rng, 20);
    const MatrixXd a = w.cwiseSqrt().asDiagonal() * x;
    const double best = (a * weighted_homogeneous_lsq(x, w).v).norm();
    for (int u = 0; u < 100; ++u) EXPECT_LE(best, (a * rng.unit_vector()).norm() + 1e-9);
  }
}

TEST(HomogeneousLsq, DegenerateInputs) {
  MatrixX3d x = MatrixX3d::Ones(5, 3);
  VectorXd w = VectorXd::Zero(5);
  EXPECT_THROW(weighted_homogeneous_lsq(x, w), DegenerateInput);
  w[0] = w[1] = 1.0;
  EXPECT_THROW(weighted_homogeneous_lsq(x, w), DegenerateInput);
}

TEST(HomogeneousLsqGrad, MatchesFiniteDifferences) {
  Rng rng(4);
  const auto x = random_x(rng, 40);
  const auto w = random_w(rng, 40);
  const auto g = weighted_homogeneous_lsq_grad(x, w);
  const double h = 1e-6;
  double worst = 0.0;
  for (Index i = 0; i < 40; ++i) {
    VectorXd wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    const Eigen::Vector3d fd =
        (weighted_homogeneous_lsq(x, wp).v - weighted_homogeneous_lsq(x, wm).v) / (2 * h);
    for (int r = 0; r < 3; ++r) worst = std::max(worst, rel(g.d_weights(r, i), fd[r]));
    for (int c = 0; c < 3; ++c) {
      MatrixX3d xp = x, xm = x;
      xp(i, c) += h;
      xm(i, c) -= h;
      const Eigen::Vector3d fx =
          (weighted_homogeneous_lsq(xp, w).v - weighted_homogeneous_lsq(xm, w).v) / (2 * h);
      for (int r = 0; r < 3; ++r) worst = std::max(worst, rel(g.d_points(r, 3 * i + c), fx[r]));
    }
  }
  EXPECT_LT(worst, 1e-4);
}

TEST(HomogeneousLsqGrad, RepeatedSingularValuesStayFinite) {
  // Octahedron vertices: X^T X = 2 I, every gap is zero.
  MatrixX3d x(6, 3);
  x << 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1, 0, 0, 0, 1, 0, 0, -1;
  const auto g = weighted_homogeneous_lsq_grad(x, VectorXd::Ones(6));
  EXPECT_TRUE(g.d_weights.allFinite());
  EXPECT_TRUE(g.d_points.allFinite());
  // clamp bound: |grad| <= |inputs| / eps
  EXPECT_LE(g.d_points.cwiseAbs().maxCoeff(), x.norm() / kSvdGradClamp);
}

TEST(HomogeneousLsqGrad, ZeroRowHasZeroWeightGradient) {
  Rng rng(5);
  MatrixX3d x = random_x(rng, 10);
  VectorXd w = random_w(rng, 10);
  x.row(3).setZero();
  w[3] = 0.0;
  const auto g = weighted_homogeneous_lsq_grad(x, w);
  EXPECT_EQ(g.d_weights.col(3).norm(), 0.0);
}

TEST(LinearLsq, ConsistentSystemIsExact) {
  Rng rng(6);
  MatrixXd x(12, 3);
  for (Index i = 0; i < 12; ++i) x.row(i) = rng.in_box(1.0).transpose();
  const Eigen::Vector3d c(0.3, -1.2, 2.0);
  const VectorXd y = x * c;
  const auto s = weighted_linear_lsq(x, y, VectorXd::Ones(12), 0.0);
  EXPECT_FALSE(s.trivialized);
  EXPECT_NEAR((s.x - c).norm(), 0.0, 1e-10);
  const auto r = weighted_linear_lsq(x, y, VectorXd::Ones(12));
  EXPECT_NEAR((r.x - c).norm(), 0.0, 1e-6);
}

TEST(LinearLsq, MatchesQrOracle) {
  Rng rng(7);
  for (int trial = 0; trial < 50; ++trial) {
    MatrixXd x(25, 3);
    VectorXd y(25);
    for (Index i = 0; i < 25; ++i) {
      x.row(i) = rng.in_box(1.0).transpose();
      y[i] = rng.uniform(-1, 1);
    }
    const auto w = random_w(rng, 25);
    const double lambda = trial % 2 ? 1e-8 : 0.1;
    const auto s = weighted_linear_lsq(x, y, w, lambda);
    EXPECT_NEAR((s.x - ridge_oracle(x, y, w, lambda)).norm(), 0.0, 1e-9);
  }
}

TEST(LinearLsq, IllConditionedIsTrivialized) {
  Rng rng(8);
  MatrixXd x(20, 3);
  for (Index i = 0; i < 20; ++i) x.row(i) = rng.in_box(1.0).transpose();
  x.col(2) *= 1e-6;
  const VectorXd y = VectorXd::Ones(20);
  const auto s = weighted_linear_lsq(x, y, VectorXd::Ones(20));
  EXPECT_TRUE(s.trivialized);
  EXPECT_EQ(s.x.norm(), 0.0);
  EXPECT_GT(s.cond, kMaxConditionNumber);
  const auto g = weighted_linear_lsq_grad(x, y, VectorXd::Ones(20));
  EXPECT_EQ(g.d_weights.norm() + g.d_points.norm() + g.d_targets.norm() + g.d_lambda.norm(), 0.0);
}

TEST(LinearLsq, EmptyWeightsThrow) {
  EXPECT_THROW(weighted_linear_lsq(MatrixXd::Ones(4, 3), VectorXd::Ones(4), VectorXd::Zero(4)), DegenerateInput);
}

TEST(LinearLsqGrad, MatchesFiniteDifferences) {
  Rng rng(9);
  const Index n = 30;
  MatrixXd x(n, 3);
  VectorXd y(n);
  for (Index i = 0; i < n; ++i) {
    x.row(i) = rng.in_box(1.0).transpose();
    y[i] = rng.uniform(-1, 1);
  }
  const auto w = random_w(rng, n);
  const double lambda = 1e-3;
  const auto g = weighted_linear_lsq_grad(x, y, w, lambda);
  auto solve = [&](const MatrixXd& xx, const VectorXd& yy, const VectorXd& ww, double l) {
    return weighted_linear_lsq(xx, yy, ww, l).x;
  };
  const double h = 1e-6;
  double worst = 0.0;
  for (Index i = 0; i < n; ++i) {
    VectorXd wp = w, wm = w, yp = y, ym = y;
    wp[i] += h;
    wm[i] -= h;
    yp[i] += h;
    ym[i] -= h;
    const VectorXd fw = (solve(x, y, wp, lambda) - solve(x, y, wm, lambda)) / (2 * h);
    const VectorXd fy = (solve(x, yp, w, lambda) - solve(x, ym, w, lambda)) / (2 * h);
    for (int r = 0; r < 3; ++r) {
      worst = std::max(worst, rel(g.d_weights(r, i), fw[r]));
      worst = std::max(worst, rel(g.d_targets(r, i), fy[r]));
    }
    for (int c = 0; c < 3; ++c) {
      MatrixXd xp = x, xm = x;
      xp(i, c) += h;
      xm(i, c) -= h;
      const VectorXd fx = (solve(xp, y, w, lambda) - solve(xm, y, w, lambda)) / (2 * h);
      for (int r = 0; r < 3; ++r) worst = std::max(worst, rel(g.d_points(r, 3 * i + c), fx[r]));
    }
  }
  const VectorXd fl = (solve(x, y, w, lambda + h) - solve(x, y, w, lambda - h)) / (2 * h);
  for (int r = 0; r < 3; ++r) worst = std::max(worst, rel(g.d_lambda[r], fl[r]));
  EXPECT_LT(worst, 1e-4);
}

TEST(ConditionNumber, KnownSpectra) {
  MatrixXd q = MatrixXd::Identity(5, 3);
  EXPECT_NEAR(condition_number(q), 1.0, 1e-12);
  MatrixXd d = MatrixXd::Zero(6, 3);
  d(0, 0) = 10;
  d(1, 1) = 1;
  d(2, 2) = 0.001;
  EXPECT_NEAR(condition_number(d), 1e4, 1e-6);
  Rng rng(10);
  MatrixXd r(8, 3);
  for (Index i = 0; i < 8; ++i) r.row(i) = rng.in_box(1.0).transpose();
  Eigen::JacobiSVD<MatrixXd> svd(r);
  const double oracle = svd.singularValues()[0] / svd.singularValues()[2];
  EXPECT_NEAR(condition_number(r) / oracle, 1.0, 1e-9);
  EXPECT_GT(condition_number(MatrixXd::Ones(4, 3)), 1e12);
  EXPECT_TRUE(std::isinf(condition_number(MatrixXd::Ones(2, 3))));
}
