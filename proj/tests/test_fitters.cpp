#include <gtest/gtest.h>

#include <cmath>
#include <numbers>

#include "primfit/distance.hpp"
#include "primfit/fitters.hpp"
#include "primfit/metrics.hpp"
#include "primfit/scene_io.hpp"
#include "primfit/synthgen.hpp"
#include "test_support.hpp"

using namespace primfit;
using namespace primfit::testing;
using Eigen::MatrixX3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;

namespace {

SceneSpec spec_with(Index n, double noise) {
  SceneSpec spec;
  spec.n_points = n;
  spec.m_samples = 128;
  spec.noise_amplitude = noise;
  return spec;
}

FitResult with_columns(const MatrixXd& w) {
  FitResult f;
  f.membership.weights = w;
  for (Index k = 0; k < w.cols(); ++k) f.primitives.push_back({Plane{{0, 0, 1}, static_cast<double>(k)}, 1.0});
  return f;
}

}  // namespace

TEST(Normals, PcaNormalsOnPlane) {
  Rng rng(80);
  const auto s = sample_plane(Plane{canonical_sign(Vector3d(1, 2, 3).normalized()), 0.1}, 500, rng);
  const auto n = estimate_normals(s.points, 16);
  for (Index i = 0; i < 500; ++i) EXPECT_GT(abs_cos(n.row(i).transpose(), s.normals.row(i).transpose()), 1 - 1e-9);
}

TEST(MinimalCandidate, ExactThroughMinimalSets) {
  Rng rng(81);
  for (auto t : kAllTypes) {
    for (int trial = 0; trial < 20; ++trial) {
      const auto prim = random_params(t, rng);
      const Index need = t == PrimitiveType::kPlane ? 1 : t == PrimitiveType::kCone ? 3 : 2;
      const auto s = sample(prim, need, rng);
      const auto c = minimal_candidate(t, s.points, s.normals);
      if (!c) continue;  // degenerate draws are allowed to fail
      // The candidate must pass through fresh samples of the same surface.
      const auto check = sample(prim, 20, rng);
      EXPECT_LT(distances(check.points, *c).maxCoeff(), 1e-6) << type_name(t);
    }
  }
}

TEST(MinimalCandidate, DegenerateSetsReturnNothing) {
  MatrixX3d p(2, 3), n(2, 3);
  p << 0, 0, 0, 1, 0, 0;
  n << 0, 0, 1, 0, 0, 1;
  EXPECT_FALSE(minimal_candidate(PrimitiveType::kCylinder, p, n).has_value());
}

TEST(Ransac, SingleNoiselessPlane) {
  SceneSpec spec = spec_with(2000, 0.0);
  spec.k_min = spec.k_max = 1;
  spec.type_mix = {1, 0, 0, 0};
  const auto scene = generate_scene(spec, 2);
  RansacConfig cfg;
  cfg.distance_epsilon = 0.005;
  const auto fit = ransac_fit(scene.cloud.positions, *scene.cloud.normals, cfg);
  ASSERT_EQ(fit.primitives.size(), 1u);
  EXPECT_EQ(fit.primitives[0].type(), PrimitiveType::kPlane);
  EXPECT_EQ(p_coverage(scene.cloud.positions, fit.primitive_params(), 0.005), 100.0);
}

TEST(Ransac, DeterministicForFixedSeed) {
  const auto scene = generate_scene(spec_with(3000, 0.01), 3);
  RansacConfig cfg;
  cfg.seed = 17;
  const auto a = ransac_fit(scene.cloud.positions, *scene.cloud.normals, cfg);
  const auto b = ransac_fit(scene.cloud.positions, *scene.cloud.normals, cfg);
  EXPECT_EQ(dump_json(fit_to_json(a)), dump_json(fit_to_json(b)));
}

TEST(Ransac, TwoSeparatedSpheres) {
  int good = 0;
  const int seeds = 20;
  for (int seed = 0; seed < seeds; ++seed) {
    const std::vector<SurfacePatch> patches = {SphereCap{{-0.5, 0, 0}, {0, 0, 1}, 0.3, std::numbers::pi},
                                               SphereCap{{0.5, 0, 0}, {0, 0, 1}, 0.3, std::numbers::pi}};
    const auto scene = assemble_scene(patches, spec_with(2000, 0.01), static_cast<std::uint64_t>(seed));
    RansacConfig cfg;
    cfg.seed = static_cast<std::uint64_t>(seed);
    const auto fit = ransac_fit(scene.cloud.positions, *scene.cloud.normals, cfg);
    int found = 0;
    for (const auto& s : scene.surfaces) {
      const Vector3d c = std::get<Sphere>(s.params).center;
      for (const auto& p : fit.primitives) {
        if (const auto* sp = std::get_if<Sphere>(&p.params); sp && (sp->center - c).norm() < 1e-2) {
          ++found;
          break;
        }
      }
    }
    good += found == 2;
  }
  EXPECT_GE(good, 19) << good << " of " << seeds;
}

TEST(Ransac, SmallPrimitiveBelowMinInliersIsMissed) {
  // A large plane plus a small sphere far from it.
  const std::vector<SurfacePatch> patches = {PlanePatch{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, 1.0, 1.0},
                                             SphereCap{{0, 0, 0.8}, {0, 0, 1}, 0.08, std::numbers::pi}};
  const auto scene = assemble_scene(patches, spec_with(4000, 0.0), 4);
  const double small = scene.membership.weights.col(1).sum();
  ASSERT_GT(small, 0.0);
  ASSERT_LT(small / 4000.0, 0.03);
  RansacConfig cfg;
  cfg.min_inliers = static_cast<int>(small) + 10;
  const auto fit = ransac_fit(scene.cloud.positions, *scene.cloud.normals, cfg);
  for (const auto& p : fit.primitives) EXPECT_LT(surface_coverage(scene.surfaces[1], p.params, 0.02), 0.5);
  // The oracle keeps it.
  const auto oracle = oracle_fit(scene);
  EXPECT_GT(surface_coverage(scene.surfaces[1], oracle.primitives[1].params, 0.02), 0.95);
}

TEST(Ransac, EmptyCloud) {
  const auto fit = ransac_fit(MatrixX3d(0, 3), MatrixX3d(0, 3), RansacConfig{});
  EXPECT_TRUE(fit.primitives.empty());
}

TEST(Discard, DocumentedExamples) {
  const Index n = 10000;
  MatrixXd w = MatrixXd::Zero(n, 4);
  w.col(1).head(49).setOnes();   // 0.0049
  w.col(2).head(51).setOnes();   // 0.0051
  w.col(3).tail(5000).setOnes();
  const auto out = discard_small(with_columns(w));
  ASSERT_EQ(out.primitives.size(), 2u);
  EXPECT_EQ(std::get<Plane>(out.primitives[0].params).d, 2.0);
  EXPECT_EQ(std::get<Plane>(out.primitives[1].params).d, 3.0);
  EXPECT_EQ(out.membership.weights.col(0), w.col(2));
  // Idempotent, and identity when nothing is small.
  const auto twice = discard_small(out);
  EXPECT_EQ(twice.membership.weights, out.membership.weights);
  EXPECT_EQ(twice.primitives.size(), out.primitives.size());
}

TEST(VoteTypes, DocumentedExamples) {
  const auto t = TypeMatrix::from_labels({0, 0, 1, 1, 1, 2, 3, 3});
  MatrixXd w = MatrixXd::Zero(8, 4);
  w(0, 0) = w(1, 0) = 1;
  w(2, 1) = w(3, 1) = w(4, 1) = 1;
  w(5, 2) = 1;
  w(6, 3) = w(7, 3) = 1;
  using T = PrimitiveType;
  EXPECT_EQ(vote_types(t.onehot, w), (std::vector<T>{T::kPlane, T::kSphere, T::kCylinder, T::kCone}));
  EXPECT_EQ(vote_types(MatrixXd::Constant(8, 4, 0.25), w), std::vector<T>(4, T::kPlane));
  // 60/40 column: three cones, two spheres.
  const auto t2 = TypeMatrix::from_labels({3, 3, 3, 1, 1});
  EXPECT_EQ(vote_types(t2.onehot, MatrixXd::Ones(5, 1)), std::vector<T>{T::kCone});
}

TEST(Em, GroundTruthIsFixedPoint) {
  const auto scene = generate_scene(spec_with(3000, 0.0), 5);
  EmTrace trace;
  const auto fit = em_fit(scene.cloud.positions, *scene.cloud.normals, ground_truth_fit(scene), EmConfig{}, &trace);
  ASSERT_FALSE(trace.changes.empty());
  EXPECT_EQ(trace.changes[0], 0);
  EXPECT_EQ(fit.membership.weights, scene.membership.weights);
  for (Index k = 0; k < scene.num_primitives(); ++k)
    EXPECT_LT(distances(scene.surfaces[k].samples, fit.primitives[k].params).maxCoeff(), 1e-7);
}

TEST(Em, HardEnergyIsMonotoneOnPlanesAndSpheres) {
  SceneSpec spec = spec_with(2000, 0.01);
  spec.type_mix = {0.5, 0.5, 0, 0};
  spec.k_min = 2;
  spec.k_max = 6;
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    const auto scene = generate_scene(spec, seed);
    Rng rng(seed + 1000);
    auto init = ground_truth_fit(scene);
    for (auto& p : init.primitives) {
      if (auto* pl = std::get_if<Plane>(&p.params)) pl->d += rng.uniform(-0.02, 0.02);
      if (auto* sp = std::get_if<Sphere>(&p.params)) sp->center += 0.02 * rng.unit_vector();
    }
    EmConfig cfg;
    cfg.cap = 0.0;
    cfg.assign_by = AssignBy::kAlgebraicEnergy;
    cfg.min_change_fraction = 0.0;
    cfg.iterations = 10;
    EmTrace tr;
    em_fit(scene.cloud.positions, *scene.cloud.normals, init, cfg, &tr);
    for (std::size_t i = 0; i < tr.energy.size(); ++i) {
      EXPECT_LE(tr.energy[i], tr.energy_assign[i] + 1e-9) << "seed " << seed << " it " << i;
      if (i > 0) EXPECT_LE(tr.energy_assign[i], tr.energy[i - 1] + 1e-9) << "seed " << seed << " it " << i;
    }
  }
}

TEST(Em, FarColumnCollapses) {
  const auto scene = generate_scene(spec_with(2000, 0.01), 6);
  auto init = ground_truth_fit(scene);
  init.primitives.push_back({Plane{{0, 0, 1}, 50.0}, 0.0});
  init.membership.weights.conservativeResize(Eigen::NoChange, init.membership.weights.cols() + 1);
  init.membership.weights.rightCols(1).setZero();
  EmTrace tr;
  const auto fit = em_fit(scene.cloud.positions, *scene.cloud.normals, init, EmConfig{}, &tr);
  EXPECT_EQ(static_cast<Index>(fit.primitives.size()), scene.num_primitives());
  ASSERT_EQ(tr.collapsed.size(), 1u);
  EXPECT_EQ(fit.meta.diagnostics, tr.collapsed);
}

TEST(Em, RejectsEmptyInit) {
  FitResult empty;
  EXPECT_THROW(em_fit(MatrixX3d::Zero(3, 3), MatrixX3d::Zero(3, 3), empty, EmConfig{}), std::invalid_argument);
}

TEST(Oracle, MatchesGroundTruthOnNoiselessScenes) {
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const auto scene = generate_scene(spec_with(2000, 0.0), seed);
    const auto fit = oracle_fit(scene);
    EXPECT_TRUE(fit.meta.diagnostics.empty());
    for (Index k = 0; k < scene.num_primitives(); ++k)
      EXPECT_LT(distances(scene.surfaces[k].samples, fit.primitives[k].params).maxCoeff(), 1e-7);
  }
}
