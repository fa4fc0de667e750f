#pragma once

// Independent samplers for exact primitive surfaces. They do not use the
// generator, so estimator tests check against a second implementation.

#include <Eigen/Core>
#include <Eigen/Geometry>

#include <cmath>
#include <numbers>

#include "primfit/rng.hpp"
#include "primfit/types.hpp"

namespace primfit::testing {

struct Samples {
  Eigen::MatrixX3d points;
  Eigen::MatrixX3d normals;
};

inline Eigen::Vector3d random_unit(Rng& rng) { return rng.unit_vector(); }

inline void frame(const Eigen::Vector3d& a, Eigen::Vector3d& e1, Eigen::Vector3d& e2) {
  const Eigen::Vector3d h = std::abs(a.x()) < 0.9 ? Eigen::Vector3d::UnitX() : Eigen::Vector3d::UnitY();
  e1 = a.cross(h).normalized();
  e2 = a.cross(e1);
}

inline Samples sample_plane(const Plane& p, Eigen::Index n, Rng& rng, double extent = 0.5) {
  Eigen::Vector3d e1, e2;
  frame(p.normal, e1, e2);
  Samples s{Eigen::MatrixX3d(n, 3), Eigen::MatrixX3d(n, 3)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d q = p.d * p.normal + rng.uniform(-extent, extent) * e1 + rng.uniform(-extent, extent) * e2;
    s.points.row(i) = q.transpose();
    s.normals.row(i) = p.normal.transpose();
  }
  return s;
}

inline Samples sample_sphere(const Sphere& p, Eigen::Index n, Rng& rng) {
  Samples s{Eigen::MatrixX3d(n, 3), Eigen::MatrixX3d(n, 3)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const Eigen::Vector3d u = rng.unit_vector();
    s.points.row(i) = (p.center + p.radius * u).transpose();
    s.normals.row(i) = u.transpose();
  }
  return s;
}

inline Samples sample_cylinder(const Cylinder& p, Eigen::Index n, Rng& rng, double half_height = 0.5) {
  Eigen::Vector3d e1, e2;
  frame(p.axis, e1, e2);
  Samples s{Eigen::MatrixX3d(n, 3), Eigen::MatrixX3d(n, 3)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Eigen::Vector3d u = std::cos(phi) * e1 + std::sin(phi) * e2;
    const double h = rng.uniform(-half_height, half_height);
    s.points.row(i) = (p.center + h * p.axis + p.radius * u).transpose();
    s.normals.row(i) = u.transpose();
  }
  return s;
}

// Lateral surface between axial distances t0 < t1 from the apex.
inline Samples sample_cone(const Cone& p, Eigen::Index n, Rng& rng, double t0 = 0.3, double t1 = 1.0) {
  Eigen::Vector3d e1, e2;
  frame(p.axis, e1, e2);
  const double c = std::cos(p.half_angle);
  const double sn = std::sin(p.half_angle);
  Samples s{Eigen::MatrixX3d(n, 3), Eigen::MatrixX3d(n, 3)};
  for (Eigen::Index i = 0; i < n; ++i) {
    const double phi = rng.uniform(0.0, 2.0 * std::numbers::pi);
    const Eigen::Vector3d u = std::cos(phi) * e1 + std::sin(phi) * e2;
    const double t = rng.uniform(t0, t1);
    s.points.row(i) = (p.apex + t * p.axis + t * std::tan(p.half_angle) * u).transpose();
    s.normals.row(i) = (c * u - sn * p.axis).transpose();
  }
  return s;
}

inline PrimitiveParams random_params(PrimitiveType type, Rng& rng) {
  switch (type) {
    case PrimitiveType::kPlane: return Plane{canonical_sign(rng.unit_vector()), rng.uniform(-0.5, 0.5)};
    case PrimitiveType::kSphere: return Sphere{rng.in_box(0.5), rng.uniform(0.2, 0.8)};
    case PrimitiveType::kCylinder: {
      const Eigen::Vector3d a = canonical_sign(rng.unit_vector());
      const Eigen::Vector3d c = rng.in_box(0.5);
      return Cylinder{a, c - a.dot(c) * a, rng.uniform(0.2, 0.6)};
    }
    case PrimitiveType::kCone:
      return Cone{rng.in_box(0.5), rng.unit_vector(), rng.uniform(0.2, 1.2)};
  }
  return Plane{};
}

inline Samples sample(const PrimitiveParams& prim, Eigen::Index n, Rng& rng) {
  switch (type_of(prim)) {
    case PrimitiveType::kPlane: return sample_plane(std::get<Plane>(prim), n, rng);
    case PrimitiveType::kSphere: return sample_sphere(std::get<Sphere>(prim), n, rng);
    case PrimitiveType::kCylinder: return sample_cylinder(std::get<Cylinder>(prim), n, rng);
    case PrimitiveType::kCone: return sample_cone(std::get<Cone>(prim), n, rng);
  }
  return {};
}

// |cos| of the angle between two directions.
inline double abs_cos(const Eigen::Vector3d& a, const Eigen::Vector3d& b) {
  return std::abs(a.normalized().dot(b.normalized()));
}

// Distance from point q to the line through c along unit a.
inline double line_distance(const Eigen::Vector3d& q, const Eigen::Vector3d& c, const Eigen::Vector3d& a) {
  const Eigen::Vector3d v = q - c;
  return (v - v.dot(a) * a).norm();
}

}  // namespace primfit::testing
