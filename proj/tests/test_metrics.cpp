#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "primfit/distance.hpp"
#include "primfit/fitters.hpp"
#include "primfit/losses.hpp"
#include "primfit/metrics.hpp"
#include "primfit/synthgen.hpp"
#include "test_support.hpp"

using namespace primfit;
using namespace primfit::testing;
using Eigen::MatrixX3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;

namespace {

GroundTruthScene make_scene(std::uint64_t seed, double noise, int k_min = 3, int k_max = 6) {
  SceneSpec spec;
  spec.n_points = 2000;
  spec.m_samples = 128;
  spec.noise_amplitude = noise;
  spec.k_min = k_min;
  spec.k_max = k_max;
  return generate_scene(spec, seed);
}

Assignment diagonal(Index k) {
  Assignment a;
  for (Index i = 0; i < k; ++i) a.pairs.emplace_back(i, i);
  return a;
}

BoundedSurface plane_surface(Rng& rng) {
  const Plane p{{0, 0, 1}, 0.0};
  return {p, sample_plane(p, 100, rng).points, 1.0};
}

}  // namespace

TEST(SegMeanIou, DocumentedExamples) {
  MembershipMatrix w;
  w.weights = MatrixXd::Zero(4, 1);
  w.weights(0, 0) = w.weights(1, 0) = 1;
  EXPECT_DOUBLE_EQ(seg_mean_iou(w, w, diagonal(1)), 1.0);
  MembershipMatrix disjoint;
  disjoint.weights = MatrixXd::Zero(4, 1);
  disjoint.weights(2, 0) = 1;
  EXPECT_EQ(seg_mean_iou(w, disjoint, diagonal(1)), 0.0);
  // |intersection| = 1, |union| = 3.
  MembershipMatrix half;
  half.weights = MatrixXd::Zero(4, 1);
  half.weights(1, 0) = half.weights(2, 0) = 1;
  EXPECT_DOUBLE_EQ(seg_mean_iou(w, half, diagonal(1)), 1.0 / 3.0);
}

TEST(SegMeanIou, OneHotConversionOfSoftRows) {
  MatrixXd soft(3, 3);
  soft << 0.2, 0.5, 0.3,
          0.0, 0.0, 0.0,
          0.4, 0.1, 0.4;
  MatrixXd expect(3, 3);
  expect << 0, 1, 0,
            0, 0, 0,
            1, 0, 0;
  EXPECT_EQ(one_hot_rows(soft), expect);
}

TEST(TypeAccuracy, DocumentedExamples) {
  using T = PrimitiveType;
  const std::vector<T> t = {T::kPlane, T::kSphere, T::kCylinder, T::kCone};
  EXPECT_EQ(*type_accuracy(diagonal(4), t, t), 100.0);
  const std::vector<T> none = {T::kSphere, T::kPlane, T::kCone, T::kCylinder};
  EXPECT_EQ(*type_accuracy(diagonal(4), t, none), 0.0);
  const std::vector<T> three = {T::kPlane, T::kSphere, T::kCylinder, T::kPlane};
  EXPECT_EQ(*type_accuracy(diagonal(4), t, three), 75.0);
  EXPECT_FALSE(type_accuracy(Assignment{}, t, t).has_value());
}

TEST(PointNormalDiff, DocumentedExamples) {
  MatrixX3d n(2, 3), tilt(2, 3), ortho(2, 3);
  n << 0, 0, 1, 1, 0, 0;
  const double s = std::sqrt(0.5);
  tilt << s, 0, s, s, s, 0;
  ortho << 1, 0, 0, 0, 0, -1;
  EXPECT_EQ(point_normal_diff_deg(n, n), 0.0);
  EXPECT_NEAR(point_normal_diff_deg(n, ortho), 90.0, 1e-9);
  EXPECT_NEAR(point_normal_diff_deg(n, tilt), 45.0, 1e-9);
  EXPECT_EQ(point_normal_diff_deg(n, -n), 0.0);
}

TEST(AxisDiff, DocumentedExamples) {
  const std::vector<PrimitiveParams> gt = {Plane{{0, 0, 1}, 0}};
  EXPECT_NEAR(*axis_diff_deg(diagonal(1), gt, gt), 0.0, 1e-9);
  const double a = 10.0 * std::numbers::pi / 180.0;
  const std::vector<PrimitiveParams> off = {Plane{{std::sin(a), 0, std::cos(a)}, 0}};
  EXPECT_NEAR(*axis_diff_deg(diagonal(1), gt, off), 10.0, 1e-9);
  const std::vector<PrimitiveParams> spheres = {Sphere{{0, 0, 0}, 1}};
  EXPECT_EQ(*axis_diff_deg(diagonal(1), spheres, {Sphere{{1, 0, 0}, 2}}), 0.0);
  // A wrong type is excluded; nothing left means absent.
  EXPECT_FALSE(axis_diff_deg(diagonal(1), gt, spheres).has_value());
}

TEST(SkResidual, DocumentedExamples) {
  Rng rng(60);
  const auto s = plane_surface(rng);
  const auto exact = sk_residual(diagonal(1), {s}, {s.params});
  ASSERT_TRUE(exact.has_value());
  EXPECT_EQ(exact->mean, 0.0);
  EXPECT_EQ(exact->stddev, 0.0);
  const auto off = sk_residual(diagonal(1), {s}, {Plane{{0, 0, 1}, 0.1}});
  EXPECT_NEAR(off->mean, 0.1, 1e-15);
  EXPECT_NEAR(off->stddev, 0.0, 1e-15);
  EXPECT_FALSE(sk_residual(Assignment{}, {s}, {}).has_value());
}

TEST(SkResidual, MatchesRecountAndResidualLoss) {
  Rng rng(61);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const auto scene = make_scene(seed, 0.0);
    std::vector<PrimitiveParams> pred;
    for (const auto& s : scene.surfaces) {
      PrimitiveParams p = s.params;
      if (auto* sp = std::get_if<Sphere>(&p)) sp->radius += 0.03;
      if (auto* pl = std::get_if<Plane>(&p)) pl->d += rng.uniform(-0.05, 0.05);
      if (auto* cy = std::get_if<Cylinder>(&p)) cy->center += 0.02 * rng.unit_vector();
      if (auto* co = std::get_if<Cone>(&p)) co->half_angle *= 0.95;
      pred.push_back(p);
    }
    const Index k = scene.num_primitives();
    std::vector<double> per;
    double sq = 0;
    for (Index j = 0; j < k; ++j) {
      const auto& smp = scene.surfaces[j].samples;
      double m = 0, m2 = 0;
      for (Index i = 0; i < smp.rows(); ++i) {
        const double d = distance(smp.row(i).transpose(), pred[j]);
        m += d;
        m2 += d * d;
      }
      per.push_back(m / smp.rows());
      sq += m2 / smp.rows();
    }
    double mean = 0, var = 0;
    for (double v : per) mean += v / k;
    for (double v : per) var += (v - mean) * (v - mean) / k;
    const auto r = sk_residual(diagonal(k), scene.surfaces, pred);
    EXPECT_NEAR(r->mean, mean, 1e-12);
    EXPECT_NEAR(r->stddev, std::sqrt(var), 1e-12);

    // Squared-and-averaged residual equals the residual loss.
    std::vector<std::optional<PrimitiveParams>> matched(pred.begin(), pred.end());
    EXPECT_NEAR(residual_loss(scene.surfaces, matched), sq / k, 1e-9);
  }
}

TEST(SkCoverage, DocumentedExamples) {
  Rng rng(62);
  const auto s = plane_surface(rng);
  EXPECT_EQ(sk_coverage(diagonal(1), {s}, {s.params}, 0.01), 100.0);
  const std::vector<PrimitiveParams> off = {Plane{{0, 0, 1}, 0.015}};
  EXPECT_EQ(sk_coverage(diagonal(1), {s}, off, 0.01), 0.0);
  EXPECT_EQ(sk_coverage(diagonal(1), {s}, off, 0.02), 100.0);
  // Unmatched surfaces count as zero.
  EXPECT_EQ(sk_coverage(diagonal(1), {s, s}, {s.params}, 0.01), 50.0);
}

TEST(SkCoverage, MatchesBruteRecountAndIsMonotone) {
  Rng rng(63);
  const auto scene = make_scene(3, 0.0, 5, 5);
  std::vector<PrimitiveParams> pred;
  for (const auto& s : scene.surfaces) {
    PrimitiveParams p = s.params;
    if (auto* pl = std::get_if<Plane>(&p)) pl->normal = (pl->normal + 0.05 * rng.unit_vector()).normalized();
    if (auto* sp = std::get_if<Sphere>(&p)) sp->center += 0.02 * rng.unit_vector();
    if (auto* cy = std::get_if<Cylinder>(&p)) cy->radius += 0.012;
    if (auto* co = std::get_if<Cone>(&p)) co->apex += 0.02 * rng.unit_vector();
    pred.push_back(p);
  }
  double prev = -1;
  for (double eps : {0.002, 0.005, 0.01, 0.015, 0.02, 0.05}) {
    double ref = 0;
    for (Index k = 0; k < 5; ++k) {
      int inside = 0;
      const auto& smp = scene.surfaces[k].samples;
      for (Index i = 0; i < smp.rows(); ++i) inside += distance(smp.row(i).transpose(), pred[k]) < eps;
      ref += 100.0 * inside / smp.rows() / 5.0;
    }
    const double got = sk_coverage(diagonal(5), scene.surfaces, pred, eps);
    EXPECT_NEAR(got, ref, 1e-9);
    EXPECT_GE(got, prev);
    prev = got;
  }
}

TEST(PCoverage, DocumentedExamples) {
  const auto clean = make_scene(4, 0.0);
  const auto prims = clean.primitive_params();
  EXPECT_EQ(p_coverage(clean.cloud.positions, prims, 0.01), 100.0);
  EXPECT_EQ(p_coverage(clean.cloud.positions, {}, 0.01), 0.0);
  const auto noisy = make_scene(4, 0.01);
  EXPECT_EQ(p_coverage(noisy.cloud.positions, noisy.primitive_params(), 0.02), 100.0);
}

TEST(PCoverage, MaskRestrictsRows) {
  MatrixX3d pts(4, 3);
  pts << 0, 0, 0, 0, 0, 0.005, 0, 0, 0.5, 0, 0, 0.8;
  const std::vector<PrimitiveParams> prims = {Plane{{0, 0, 1}, 0}};
  EXPECT_EQ(p_coverage(pts, prims, 0.01), 50.0);
  const std::vector<bool> mask = {true, true, false, false};
  EXPECT_EQ(p_coverage(pts, prims, 0.01, &mask), 100.0);
}

TEST(ScaleBins, SingleBinEqualsSkCoverage) {
  const auto scene = make_scene(5, 0.01);
  const auto pred = oracle_fit(scene).primitive_params();
  const Index k = scene.num_primitives();
  const auto bins = scale_binned_sk_coverage(diagonal(k), scene.surfaces, pred, 0.01, {0.0, 1.0});
  ASSERT_EQ(bins.size(), 1u);
  EXPECT_EQ(bins[0].count, k);
  EXPECT_NEAR(*bins[0].coverage, sk_coverage(diagonal(k), scene.surfaces, pred, 0.01), 1e-9);
}

TEST(ScaleBins, PerPrimitiveValues) {
  Rng rng(64);
  auto a = plane_surface(rng);
  auto b = plane_surface(rng);
  a.area_fraction = 0.03;
  b.area_fraction = 0.5;
  const std::vector<PrimitiveParams> pred = {Plane{{0, 0, 1}, 0.0}, Plane{{0, 0, 1}, 0.5}};
  const auto bins = scale_binned_sk_coverage(diagonal(2), {a, b}, pred, 0.01);
  ASSERT_EQ(bins.size(), kDefaultScaleBins.size() - 1);
  EXPECT_EQ(*bins.front().coverage, 100.0);
  EXPECT_EQ(*bins.back().coverage, 0.0);
  for (std::size_t i = 1; i + 1 < bins.size(); ++i) EXPECT_FALSE(bins[i].coverage.has_value());
}

TEST(EvaluateShape, OracleIdentityOnNoiselessScenes) {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = make_scene(seed, 0.0);
    const auto m = evaluate_shape(scene, oracle_fit(scene));
    EXPECT_NEAR(m.seg_mean_iou, 1.0, 1e-12);
    EXPECT_EQ(*m.type_accuracy_pct, 100.0);
    EXPECT_NEAR(*m.point_normal_deg, 0.0, 1e-4);
    EXPECT_NEAR(*m.primitive_axis_deg, 0.0, 1e-4);
    EXPECT_LT(*m.sk_residual_mean, 1e-7);
    EXPECT_LT(*m.sk_residual_std, 1e-7);
    for (const auto& [eps, v] : m.sk_coverage) EXPECT_EQ(v, 100.0) << eps;
    for (const auto& [eps, v] : m.p_coverage) EXPECT_EQ(v, 100.0) << eps;
  }
}

TEST(EvaluateShape, EmptyPredictionReportsAbsentValues) {
  const auto scene = make_scene(6, 0.01);
  FitResult empty;
  empty.membership.weights = MatrixXd::Zero(scene.num_points(), 0);
  const auto m = evaluate_shape(scene, empty);
  EXPECT_EQ(m.seg_mean_iou, 0.0);
  EXPECT_FALSE(m.type_accuracy_pct.has_value());
  EXPECT_FALSE(m.primitive_axis_deg.has_value());
  EXPECT_FALSE(m.sk_residual_mean.has_value());
  for (const auto& [eps, v] : m.sk_coverage) EXPECT_EQ(v, 0.0);
  for (const auto& [eps, v] : m.p_coverage) EXPECT_EQ(v, 0.0);
}

TEST(EvaluateShape, ResidualMatchingAgreesOnOracle) {
  const auto scene = make_scene(7, 0.0);
  EvalOptions opts;
  opts.match = MatchMode::kResidual;
  const auto m = evaluate_shape(scene, oracle_fit(scene), opts);
  EXPECT_NEAR(m.seg_mean_iou, 1.0, 1e-12);
  EXPECT_EQ(*m.type_accuracy_pct, 100.0);
}
