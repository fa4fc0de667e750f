#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "json.hpp"

namespace primfit {

using Eigen::Index;

/// Column order of every per-point type matrix.
enum class PrimitiveType : int { kPlane = 0, kSphere = 1, kCylinder = 2, kCone = 3 };

inline constexpr int kNumTypes = 4;
inline constexpr std::array<PrimitiveType, kNumTypes> kAllTypes = {
    PrimitiveType::kPlane, PrimitiveType::kSphere, PrimitiveType::kCylinder,
    PrimitiveType::kCone};

std::string_view type_name(PrimitiveType type);
/// Throws std::invalid_argument for unknown names.
PrimitiveType parse_type(std::string_view name);
inline int type_index(PrimitiveType type) { return static_cast<int>(type); }

// Unoriented plane {p : normal . p = d}. The normal is canonicalized so that
// its first nonzero component is positive.
struct Plane {
  Eigen::Vector3d normal = Eigen::Vector3d::UnitZ();
  double d = 0.0;
};

struct Sphere {
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;
};

// Infinite cylinder. Fitted cylinders use the axis.center == 0 convention.
struct Cylinder {
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  Eigen::Vector3d center = Eigen::Vector3d::Zero();
  double radius = 1.0;
};

// Infinite single-nappe cone. The axis points from the apex into the cone and
// is never sign-canonicalized.
struct Cone {
  Eigen::Vector3d apex = Eigen::Vector3d::Zero();
  Eigen::Vector3d axis = Eigen::Vector3d::UnitZ();
  double half_angle = 0.5;
};

using PrimitiveParams = std::variant<Plane, Sphere, Cylinder, Cone>;

PrimitiveType type_of(const PrimitiveParams& params);

/// Axis of plane/cylinder/cone; std::nullopt for spheres.
std::optional<Eigen::Vector3d> axis_of(const PrimitiveParams& params);

/// Flips `v` so that its first component with magnitude above `tol` is positive.
Eigen::Vector3d canonical_sign(const Eigen::Vector3d& v, double tol = 1e-12);

/// Returns violations of the parameter invariants (unit axes, positive radii,
/// open half-angle interval). Empty when valid.
std::vector<std::string> check_params(const PrimitiveParams& params);

struct PointCloud {
  Eigen::MatrixX3d positions;
  std::optional<Eigen::MatrixX3d> normals;

  Index size() const { return positions.rows(); }
};

// N x K soft point-to-primitive weights. All-zero rows mark unassigned points.
struct MembershipMatrix {
  Eigen::MatrixXd weights;
  bool binary = false;

  Index num_points() const { return weights.rows(); }
  Index num_primitives() const { return weights.cols(); }
};

// N x 4 per-point type matrix; rows are one-hot (or probabilities for
// predictions) or all zero for unassigned points.
struct TypeMatrix {
  Eigen::MatrixXd onehot;

  /// labels[i] in {-1, 0, 1, 2, 3}; -1 produces a zero row.
  static TypeMatrix from_labels(const std::vector<int>& labels);
  /// Inverse of from_labels for one-hot rows.
  std::vector<int> labels() const;
};

struct BoundedSurface {
  PrimitiveParams params;
  Eigen::MatrixX3d samples;  // M uniform samples of the bounded region
  double area_fraction = 1.0;

  PrimitiveType type() const { return type_of(params); }
};

struct GroundTruthScene {
  PointCloud cloud;  // noisy positions and exact normals
  Eigen::MatrixX3d clean_positions;
  std::vector<BoundedSurface> surfaces;
  MembershipMatrix membership;
  TypeMatrix types;
  std::uint64_t seed = 0;

  Index num_points() const { return cloud.size(); }
  Index num_primitives() const { return static_cast<Index>(surfaces.size()); }
  std::vector<PrimitiveType> primitive_types() const;
  std::vector<PrimitiveParams> primitive_params() const;
};

struct FittedPrimitive {
  PrimitiveParams params;
  double confidence = 1.0;

  PrimitiveType type() const { return type_of(params); }
};

struct FitMeta {
  std::string method;
  nlohmann::ordered_json config = nlohmann::ordered_json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> diagnostics;
};

struct FitResult {
  std::vector<FittedPrimitive> primitives;
  MembershipMatrix membership;               // N x primitives.size()
  std::optional<Eigen::MatrixX3d> normals;   // predicted per-point normals
  std::optional<Eigen::MatrixXd> point_types;  // soft N x 4
  FitMeta meta;

  std::vector<PrimitiveType> primitive_types() const;
  std::vector<PrimitiveParams> primitive_params() const;
};

/// Diagnostic check of every scene invariant. Returns one human-readable line
/// per violation; empty means the scene is valid.
std::vector<std::string> validate(const GroundTruthScene& scene);

/// Structural checks for a fit: column count, NaN entries, weight range.
std::vector<std::string> validate(const FitResult& fit);

}  // namespace primfit
