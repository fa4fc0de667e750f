#pragma once

#include <Eigen/Core>

#include <optional>
#include <string>
#include <vector>

#include "primfit/distance.hpp"
#include "primfit/numeric.hpp"
#include "primfit/types.hpp"

namespace primfit {

// Points, (predicted) unit normals and one soft membership column. A view: the
// referenced matrices must outlive the input. Plane fits ignore `normals`,
// which may then be empty.
struct EstimatorInput {
  const Eigen::MatrixX3d& points;
  const Eigen::MatrixX3d& normals;
  const Eigen::VectorXd& weights;
};

struct EstimatorOptions {
  double ridge = kDefaultRidge;
  bool compute_gradient = false;
};

// Minimum number of rows with weight above kEffectiveWeight per estimator.
inline constexpr Index kMinPlanePoints = 3;
inline constexpr Index kMinSpherePoints = 4;
inline constexpr Index kMinCylinderPoints = 5;
inline constexpr Index kMinConePoints = 6;

inline constexpr double kConeAngleMin = 1e-4;
inline constexpr double kConeAngleMax = 1.5707963267948966 - 1e-4;

/// Result of one estimator call. When requested, `gradient` holds Jacobians of
/// the flattened parameter vector (see flatten_params) with respect to the
/// weights, points and normals.
struct Estimate {
  PrimitiveParams params;
  bool trivialized = false;
  std::optional<GradientBundle> gradient;
};

/// Parameter vector layout used by every Jacobian:
///   plane    [n(3), d]
///   sphere   [c(3), r]
///   cylinder [a(3), c(3), r]
///   cone     [apex(3), a(3), theta]
Eigen::VectorXd flatten_params(const PrimitiveParams& params);
Index param_count(PrimitiveType type);

/// Weighted plane: axis from the homogeneous solve on weight-centered points,
/// offset d = sum w a.p / sum w.
Estimate fit_plane(const EstimatorInput& in, const EstimatorOptions& opts = {});

/// Algebraic sphere fit: center from the weighted linear solve on
/// X_i = 2(P_i - mean P), y_i = |P_i|^2 - mean |P|^2; r^2 = weighted mean
/// |P_i - c|^2. Flat segments trip the condition guard (trivialized, c = 0).
Estimate fit_sphere(const EstimatorInput& in, const EstimatorOptions& opts = {});

/// Axis from the homogeneous solve on the weighted normals, then a 2D
/// algebraic circle fit of the points projected on the plane orthogonal to the
/// axis through the origin. The returned center satisfies axis.center = 0.
Estimate fit_cylinder(const EstimatorInput& in, const EstimatorOptions& opts = {});

/// Apex from the weighted tangent-plane intersection (rows N_i, targets
/// N_i.P_i); axis from a weighted plane fit of the normal endpoints, flipped
/// to point from the apex toward the weighted centroid. Input normals may be
/// unoriented: they are first flipped against a rough axis (plane fit of the
/// unit apex-to-point directions), which the endpoint fit needs; half angle as the
/// weighted mean of acos|a.(P_i - c)/|P_i - c||, clamped to
/// [kConeAngleMin, kConeAngleMax].
Estimate fit_cone(const EstimatorInput& in, const EstimatorOptions& opts = {});

Estimate fit_primitive(PrimitiveType type, const EstimatorInput& in,
                       const EstimatorOptions& opts = {});

struct ColumnEstimate {
  std::optional<PrimitiveParams> params;  // absent when the column failed
  bool trivialized = false;
  std::string diagnostic;
};

/// Fits every membership column with the estimator of its type. Columns that
/// violate an estimator precondition come back without parameters and with a
/// diagnostic; the others are unaffected.
std::vector<ColumnEstimate> estimate_all(const Eigen::MatrixX3d& points,
                                         const Eigen::MatrixX3d& normals,
                                         const MembershipMatrix& membership,
                                         const std::vector<PrimitiveType>& types,
                                         const EstimatorOptions& opts = {});

}  // namespace primfit
