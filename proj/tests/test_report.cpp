#include <gtest/gtest.h>

#include <algorithm>

#include "primfit/fitters.hpp"
#include "primfit/metrics.hpp"
#include "primfit/report.hpp"
#include "primfit/synthgen.hpp"

using namespace primfit;

namespace {

MetricsBundle bundle(const std::string& id, double iou, std::optional<double> axis = 1.0) {
  MetricsBundle b;
  b.shape_id = id;
  b.num_gt = b.num_pred = b.num_matched = 2;
  b.seg_mean_iou = iou;
  b.type_accuracy_pct = 100.0 * iou;
  b.point_normal_deg = 2.0;
  b.primitive_axis_deg = axis;
  b.sk_residual_mean = 0.01;
  b.sk_residual_std = 0.0;
  b.sk_coverage = {{0.01, 50.0 + iou}, {0.02, 90.0}};
  b.p_coverage = {{0.01, 60.0}, {0.02, 95.0}};
  b.p_coverage_assigned = b.p_coverage;
  b.surface_area_fractions = {0.03, 0.5};
  b.surface_coverage = {{0.01, {40.0, 60.0 + iou}}, {0.02, {80.0, 100.0}}};
  for (double eps : {0.01, 0.02}) {
    auto& bins = b.scale_bins[eps];
    for (std::size_t i = 0; i + 1 < kDefaultScaleBins.size(); ++i)
      bins.push_back({kDefaultScaleBins[i], kDefaultScaleBins[i + 1], 0, std::nullopt});
  }
  return b;
}

std::vector<MetricsBundle> evaluate_batch(bool empty_prediction) {
  SceneSpec spec;
  spec.n_points = 1500;
  spec.m_samples = 64;
  std::vector<MetricsBundle> out;
  for (std::uint64_t seed = 0; seed < 4; ++seed) {
    const auto scene = generate_scene(spec, seed);
    FitResult fit = oracle_fit(scene);
    if (empty_prediction) {
      fit = FitResult{};
      fit.membership.weights = Eigen::MatrixXd::Zero(scene.num_points(), 0);
    }
    auto m = evaluate_shape(scene, fit);
    m.shape_id = "scene_" + std::to_string(seed);
    out.push_back(m);
  }
  return out;
}

}  // namespace

TEST(Aggregate, SingleBundleIsItself) {
  const auto r = aggregate({bundle("a", 0.3)}, "m");
  for (const auto& [name, value] : flat_metrics(bundle("a", 0.3).to_json())) {
    const auto* s = r.metric(name);
    ASSERT_NE(s, nullptr) << name;
    EXPECT_EQ(s->mean, value) << name;
  }
}

TEST(Aggregate, MeanOfTwo) {
  const auto r = aggregate({bundle("a", 0.2), bundle("b", 0.8)});
  EXPECT_DOUBLE_EQ(*r.metric("seg_mean_iou")->mean, 0.5);
  EXPECT_EQ(r.metric("seg_mean_iou")->min, 0.2);
  EXPECT_EQ(r.metric("seg_mean_iou")->max, 0.8);
}

TEST(Aggregate, AbsentValuesAreSkippedAndCounted) {
  const auto r = aggregate({bundle("a", 0.2, 4.0), bundle("b", 0.8, std::nullopt)});
  const auto* axis = r.metric("primitive_axis_deg");
  EXPECT_EQ(*axis->mean, 4.0);
  EXPECT_EQ(axis->present, 1);
  EXPECT_EQ(axis->absent, 1);
  const auto none = aggregate({bundle("a", 0.2, std::nullopt)});
  EXPECT_FALSE(none.metric("primitive_axis_deg")->mean.has_value());
}

TEST(Aggregate, PermutationInvariantAndWithinRange) {
  std::vector<MetricsBundle> bs;
  const double ious[] = {0.1, 0.7, 0.33, 0.91, 0.05, 0.62, 0.48};
  for (int i = 0; i < 7; ++i) bs.push_back(bundle("s" + std::to_string(i), ious[i]));
  const auto ref = aggregate(bs).to_json();
  std::sort(bs.begin(), bs.end(), [](const auto& a, const auto& b) { return a.seg_mean_iou < b.seg_mean_iou; });
  do {
    EXPECT_EQ(aggregate(bs).to_json(), ref);
  } while (std::next_permutation(bs.begin(), bs.begin() + 3,
                                 [](const auto& a, const auto& b) { return a.seg_mean_iou < b.seg_mean_iou; }));
  for (const auto& m : aggregate(bs).metrics) {
    if (!m.mean) continue;
    EXPECT_GE(*m.mean, m.min) << m.name;
    EXPECT_LE(*m.mean, m.max) << m.name;
  }
}

TEST(Aggregate, DuplicateShapeIdsThrow) {
  EXPECT_THROW(aggregate({bundle("a", 0.1), bundle("a", 0.2)}), std::invalid_argument);
}

TEST(Aggregate, ScaleCurvesPoolSurfaces) {
  const auto r = aggregate({bundle("a", 0.0), bundle("b", 1.0)});
  const auto& curve = r.scale_curves.at("0.01");
  // Surfaces at 0.03 (two with coverage 40) and 0.5 (60 and 61).
  EXPECT_EQ(curve.front().count, 2);
  EXPECT_DOUBLE_EQ(*curve.front().coverage, 40.0);
  EXPECT_EQ(curve.back().count, 2);
  EXPECT_DOUBLE_EQ(*curve.back().coverage, 60.5);
}

TEST(Report, JsonRoundTrip) {
  const auto r = aggregate({bundle("a", 0.2), bundle("b", 0.8, std::nullopt)}, "ransac", {"c"});
  const auto back = DatasetReport::from_json(nlohmann::ordered_json::parse(r.to_json().dump()));
  EXPECT_EQ(back.to_json(), r.to_json());
  EXPECT_EQ(back.failed, std::vector<std::string>{"c"});
  EXPECT_NE(r.table().find("ransac"), std::string::npos);
  auto bad = r.to_json();
  bad["schema"] = kReportSchema + 1;
  EXPECT_THROW(DatasetReport::from_json(nlohmann::ordered_json::parse(bad.dump())), std::invalid_argument);
}

TEST(Compare, IdenticalReportsGiveZeroDeltas) {
  const auto r = aggregate({bundle("a", 0.2), bundle("b", 0.8)});
  const auto c = compare(r, r);
  EXPECT_EQ(c.shared.size(), 2u);
  for (const auto& d : c.deltas) {
    if (!d.mean_delta) continue;
    EXPECT_EQ(*d.mean_delta, 0.0) << d.name;
    EXPECT_EQ(d.equal, d.paired);
  }
}

TEST(Compare, DisjointShapeSetsThrow) {
  EXPECT_THROW(compare(aggregate({bundle("a", 0.2)}), aggregate({bundle("b", 0.2)})), std::invalid_argument);
}

TEST(Compare, OracleVersusEmptyPrediction) {
  const auto oracle = aggregate(evaluate_batch(false), "oracle");
  const auto empty = aggregate(evaluate_batch(true), "empty");
  const auto c = compare(oracle, empty);
  bool seen = false;
  for (const auto& d : c.deltas) {
    if (d.name == "sk_coverage@0.02" || d.name == "p_coverage@0.02") {
      seen = true;
      EXPECT_DOUBLE_EQ(*d.mean_delta, 100.0) << d.name;
      EXPECT_EQ(d.a_higher, 4);
    }
  }
  EXPECT_TRUE(seen);
  EXPECT_NE(c.table().find("oracle"), std::string::npos);
}
