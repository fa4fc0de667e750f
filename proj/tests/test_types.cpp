#include <gtest/gtest.h>

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <numbers>

#include "primfit/scene_io.hpp"
#include "primfit/synthgen.hpp"
#include "primfit/types.hpp"

using namespace primfit;

namespace {

GroundTruthScene small_scene(std::uint64_t seed = 11) {
  SceneSpec spec;
  spec.n_points = 600;
  spec.m_samples = 64;
  spec.k_min = 2;
  spec.k_max = 4;
  return generate_scene(spec, seed);
}

bool bit_equal(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b) {
  if (a.rows() != b.rows() || a.cols() != b.cols()) return false;
  for (Index i = 0; i < a.size(); ++i) {
    if (std::memcmp(a.data() + i, b.data() + i, sizeof(double)) != 0) return false;
  }
  return true;
}

}  // namespace

TEST(Types, TypeNamesRoundTrip) {
  for (auto t : kAllTypes) EXPECT_EQ(parse_type(type_name(t)), t);
  EXPECT_THROW(parse_type("torus"), std::invalid_argument);
  EXPECT_EQ(type_index(PrimitiveType::kCone), 3);
}

TEST(Types, CanonicalSignMakesFirstComponentPositive) {
  EXPECT_EQ(canonical_sign({-1, 2, 3}), Eigen::Vector3d(1, -2, -3));
  EXPECT_EQ(canonical_sign({0, -2, 3}), Eigen::Vector3d(0, 2, -3));
  EXPECT_EQ(canonical_sign({0, 0, 5}), Eigen::Vector3d(0, 0, 5));
}

TEST(Types, CheckParamsFlagsOpenIntervalBreach) {
  EXPECT_TRUE(check_params(Cone{{0, 0, 0}, {0, 0, 1}, 0.3}).empty());
  EXPECT_EQ(check_params(Cone{{0, 0, 0}, {0, 0, 1}, std::numbers::pi / 2}).size(), 1u);
  EXPECT_EQ(check_params(Sphere{{0, 0, 0}, -1.0}).size(), 1u);
  EXPECT_EQ(check_params(Plane{{0, 0, 2}, 0.0}).size(), 1u);
}

TEST(Types, TypeMatrixLabelsRoundTrip) {
  const std::vector<int> labels = {0, 3, -1, 2, 1};
  const auto t = TypeMatrix::from_labels(labels);
  EXPECT_EQ(t.labels(), labels);
  EXPECT_DOUBLE_EQ(t.onehot.row(2).sum(), 0.0);
  EXPECT_THROW(TypeMatrix::from_labels({4}), std::invalid_argument);
}

TEST(Types, GeneratedSceneValidates) {
  EXPECT_TRUE(validate(small_scene()).empty());
}

TEST(Types, ValidateNamesRowWithExcessWeight) {
  auto scene = small_scene();
  scene.membership.binary = false;
  scene.membership.weights(7, 0) = 0.75;
  scene.membership.weights(7, 1) = 0.75;
  const auto v = validate(scene);
  ASSERT_FALSE(v.empty());
  bool named = false;
  for (const auto& s : v) named = named || s.rfind("row 7:", 0) == 0;
  EXPECT_TRUE(named);
}

TEST(Types, ValidateFlagsRightAngleCone) {
  auto scene = small_scene();
  scene.surfaces[0].params = Cone{{0, 0, 0}, {0, 0, 1}, std::numbers::pi / 2};
  const auto v = validate(scene);
  bool named = false;
  for (const auto& s : v) named = named || s.rfind("surface 0", 0) == 0;
  EXPECT_TRUE(named);
}

TEST(SceneIo, DumpPrintsSeventeenDigits) {
  nlohmann::ordered_json j;
  j["x"] = 0.1;
  j["v"] = {1.0, -0.0, 2.5};
  const std::string s = dump_json(j);
  EXPECT_NE(s.find("0.10000000000000001"), std::string::npos);
  EXPECT_NE(s.find("[1, -0.0, 2.5]"), std::string::npos);
}

TEST(SceneIo, SceneRoundTripIsBitIdentical) {
  const auto scene = small_scene(5);
  const std::string text = dump_json(scene_to_json(scene));
  const auto back = scene_from_json(nlohmann::json::parse(text));
  EXPECT_TRUE(bit_equal(scene.cloud.positions, back.cloud.positions));
  EXPECT_TRUE(bit_equal(*scene.cloud.normals, *back.cloud.normals));
  EXPECT_TRUE(bit_equal(scene.clean_positions, back.clean_positions));
  EXPECT_TRUE(bit_equal(scene.membership.weights, back.membership.weights));
  EXPECT_TRUE(bit_equal(scene.types.onehot, back.types.onehot));
  ASSERT_EQ(scene.surfaces.size(), back.surfaces.size());
  for (std::size_t k = 0; k < scene.surfaces.size(); ++k) {
    EXPECT_TRUE(bit_equal(scene.surfaces[k].samples, back.surfaces[k].samples));
    EXPECT_EQ(scene.surfaces[k].area_fraction, back.surfaces[k].area_fraction);
  }
  EXPECT_EQ(scene.seed, back.seed);
  EXPECT_EQ(dump_json(scene_to_json(back)), text);
  EXPECT_TRUE(validate(back).empty());
}

TEST(SceneIo, FitRoundTrip) {
  FitResult fit;
  fit.primitives = {{Plane{{0, 0, 1}, 0.25}, 0.5}, {Cone{{0.1, 0.2, 0.3}, {0, 1, 0}, 0.4}, 0.25}};
  fit.membership.weights = Eigen::MatrixXd::Random(5, 2).cwiseAbs() / 2.0;
  fit.point_types = Eigen::MatrixXd::Constant(5, 4, 0.25);
  fit.meta.method = "test";
  fit.meta.seed = 42;
  fit.meta.diagnostics = {"note"};
  const std::string text = dump_json(fit_to_json(fit));
  const auto back = fit_from_json(nlohmann::json::parse(text));
  EXPECT_TRUE(bit_equal(fit.membership.weights, back.membership.weights));
  ASSERT_EQ(back.primitives.size(), 2u);
  EXPECT_EQ(back.primitive_types()[1], PrimitiveType::kCone);
  EXPECT_EQ(std::get<Cone>(back.primitives[1].params).half_angle, 0.4);
  EXPECT_EQ(back.meta.seed, 42u);
  EXPECT_EQ(dump_json(fit_to_json(back)), text);
}

TEST(SceneIo, AtomicWriteLeavesNoTemporary) {
  const auto dir = std::filesystem::temp_directory_path() / "primfit_atomic_test";
  std::filesystem::create_directories(dir);
  const auto path = dir / "a.json";
  write_file_atomic(path, "first");
  write_file_atomic(path, "second");
  EXPECT_EQ(read_file(path), "second");
  int entries = 0;
  for ([[maybe_unused]] const auto& e : std::filesystem::directory_iterator(dir)) ++entries;
  EXPECT_EQ(entries, 1);
  std::filesystem::remove_all(dir);
}

TEST(SceneIo, UnknownTypeNameThrows) {
  EXPECT_THROW(params_from_json("torus", nlohmann::json::object()), std::invalid_argument);
}
