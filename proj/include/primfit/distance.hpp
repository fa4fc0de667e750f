#pragma once

#include <Eigen/Core>

#include "primfit/types.hpp"

namespace primfit {

/// Unsquared Euclidean-style distance from `p` to the unbounded primitive.
///
///   plane     |a.p - d|
///   sphere    | |p - c| - r |
///   cylinder  | |v - (a.v) a| - r |,  v = p - c
///   cone      |v| sin(min(|alpha - theta|, pi/2)),  alpha = acos(a.v / |v|)
///
/// The cone distance is 0 at the apex.
double distance(const Eigen::Vector3d& p, const PrimitiveParams& prim);

/// Distances of every row of `points`.
Eigen::VectorXd distances(const Eigen::MatrixX3d& points, const PrimitiveParams& prim);

/// Unit surface normal of the primitive at the foot point nearest to `p`.
/// Sign is arbitrary (normals are unoriented) except that sphere, cylinder and
/// cone normals point away from the center/axis.
Eigen::Vector3d surface_normal(const Eigen::Vector3d& p, const PrimitiveParams& prim);

}  // namespace primfit
