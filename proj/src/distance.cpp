#include "primfit/distance.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "overloaded.hpp"

namespace primfit {

namespace {

// Any unit vector orthogonal to `a`.
Eigen::Vector3d any_orthogonal(const Eigen::Vector3d& a) {
  Eigen::Index m = 0;
  a.cwiseAbs().minCoeff(&m);
  Eigen::Vector3d h = Eigen::Vector3d::Unit(m);
  return (h - h.dot(a) * a).normalized();
}

}  // namespace

double distance(const Eigen::Vector3d& p, const PrimitiveParams& prim) {
  return std::visit(
      Overloaded{
          [&](const Plane& s) { return std::abs(s.normal.dot(p) - s.d); },
          [&](const Sphere& s) { return std::abs((p - s.center).norm() - s.radius); },
          [&](const Cylinder& s) {
            const Eigen::Vector3d v = p - s.center;
            return std::abs((v - s.axis.dot(v) * s.axis).norm() - s.radius);
          },
          [&](const Cone& s) {
            const Eigen::Vector3d v = p - s.apex;
            const double len = v.norm();
            if (len == 0.0) return 0.0;
            const double cos_alpha = std::clamp(s.axis.dot(v) / len, -1.0, 1.0);
            const double gap = std::abs(std::acos(cos_alpha) - s.half_angle);
            return len * std::sin(std::min(gap, std::numbers::pi / 2));
          },
      },
      prim);
}

Eigen::VectorXd distances(const Eigen::MatrixX3d& points, const PrimitiveParams& prim) {
  Eigen::VectorXd out(points.rows());
  for (Index i = 0; i < points.rows(); ++i) {
    out[i] = distance(points.row(i).transpose(), prim);
  }
  return out;
}

Eigen::Vector3d surface_normal(const Eigen::Vector3d& p, const PrimitiveParams& prim) {
  return std::visit(
      Overloaded{
          [&](const Plane& s) -> Eigen::Vector3d { return s.normal; },
          [&](const Sphere& s) -> Eigen::Vector3d {
            const Eigen::Vector3d v = p - s.center;
            const double len = v.norm();
            return len > 0.0 ? Eigen::Vector3d(v / len) : Eigen::Vector3d::UnitZ();
          },
          [&](const Cylinder& s) -> Eigen::Vector3d {
            const Eigen::Vector3d v = p - s.center;
            const Eigen::Vector3d radial = v - s.axis.dot(v) * s.axis;
            const double len = radial.norm();
            return len > 0.0 ? Eigen::Vector3d(radial / len) : any_orthogonal(s.axis);
          },
          [&](const Cone& s) -> Eigen::Vector3d {
            const Eigen::Vector3d v = p - s.apex;
            const Eigen::Vector3d radial = v - s.axis.dot(v) * s.axis;
            const double len = radial.norm();
            const Eigen::Vector3d rho = len > 0.0 ? Eigen::Vector3d(radial / len)
                                                  : any_orthogonal(s.axis);
            return std::cos(s.half_angle) * rho - std::sin(s.half_angle) * s.axis;
          },
      },
      prim);
}

}  // namespace primfit
