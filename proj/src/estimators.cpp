#include "primfit/estimators.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <stdexcept>

#include "overloaded.hpp"

namespace primfit {

namespace {

using Eigen::Matrix3d;
using Eigen::MatrixXd;
using Eigen::Vector3d;
using Eigen::VectorXd;

Matrix3d skew(const Vector3d& v) {
  Matrix3d s;
  s << 0.0, -v.z(), v.y(), v.z(), 0.0, -v.x(), -v.y(), v.x(), 0.0;
  return s;
}

// Parameter vector plus Jacobians (rows = parameters). `dp` is with respect to
// the point matrix passed in, `dn` with respect to normals when used.
struct Core {
  VectorXd params;
  bool trivialized = false;
  MatrixXd dw;
  MatrixXd dp;
  MatrixXd dn;
};

// Plane through weighted points: [a(3), d].
Core plane_core(const Eigen::MatrixX3d& pts, const VectorXd& w, bool grad) {
  const Index n = pts.rows();
  detail::require_support(w, kMinPlanePoints, "fit_plane");
  const double total = w.sum();
  const Vector3d mu = pts.transpose() * w / total;
  const Eigen::MatrixX3d x = pts.rowwise() - mu.transpose();
  const auto h = detail::homogeneous_lsq(x, w, grad);
  const Vector3d a = h.solution.v;

  Core out;
  out.params.resize(4);
  out.params << a, a.dot(mu);
  if (!grad) return out;

  // Centering: dX_j/dw_i = -X_i / S, dX_j/dP_i = (delta_ij - w_i / S) I.
  Matrix3d sum_kx = Matrix3d::Zero();
  for (Index j = 0; j < n; ++j) sum_kx += h.grad.d_points.middleCols<3>(3 * j);
  out.dw.resize(4, n);
  out.dp.resize(4, 3 * n);
  for (Index i = 0; i < n; ++i) {
    const Vector3d xi = x.row(i).transpose();
    const Vector3d da_dw = h.grad.d_weights.col(i) - sum_kx * xi / total;
    const Matrix3d da_dp = h.grad.d_points.middleCols<3>(3 * i) - (w[i] / total) * sum_kx;
    out.dw.block<3, 1>(0, i) = da_dw;
    out.dw(3, i) = mu.dot(da_dw) + a.dot(xi) / total;
    out.dp.block<3, 3>(0, 3 * i) = da_dp;
    out.dp.block<1, 3>(3, 3 * i) = mu.transpose() * da_dp + (w[i] / total) * a.transpose();
  }
  return out;
}

// Algebraic hypersphere in D dimensions (D = 3 sphere, D = 2 circle):
// [c(D), r]. `dp` is with respect to the N x D point matrix, flattened
// row-major.
Core sphere_core(const MatrixXd& pts, const VectorXd& w, double ridge, bool grad) {
  const Index n = pts.rows();
  const Index dim = pts.cols();
  detail::require_support(w, dim + 1, dim == 3 ? "fit_sphere" : "circle fit");
  const double total = w.sum();
  const VectorXd mu = pts.transpose() * w / total;
  const VectorXd q = pts.rowwise().squaredNorm();
  const double q_mean = w.dot(q) / total;

  // |P_i - c|^2 - r^2 = y_i - X_i.c once r^2 is eliminated, so X_i carries
  // +2(P_i - mu).
  const MatrixXd x = (2.0 * pts).rowwise() - (2.0 * mu).transpose();
  const VectorXd y = q.array() - q_mean;
  const auto lin = detail::linear_lsq(x, y, w, ridge, grad);
  const VectorXd c = lin.solution.x;

  const MatrixXd diff = pts.rowwise() - c.transpose();
  const VectorXd dist2 = diff.rowwise().squaredNorm();
  const double r2 = w.dot(dist2) / total;
  const double r = std::sqrt(r2);

  Core out;
  out.trivialized = lin.solution.trivialized;
  out.params.resize(dim + 1);
  out.params << c, r;
  if (!grad) return out;

  MatrixXd sum_kx = MatrixXd::Zero(dim, dim);
  for (Index j = 0; j < n; ++j) sum_kx += lin.grad.d_points.middleCols(dim * j, dim);
  const VectorXd sum_ky = lin.grad.d_targets.rowwise().sum();

  // r^2 depends on c through -2 (mu - c).
  const Eigen::RowVectorXd dr2_dc = -2.0 * (mu - c).transpose();
  const double dr_dr2 = r > 0.0 ? 0.5 / r : 0.0;

  out.dw.resize(dim + 1, n);
  out.dp.resize(dim + 1, dim * n);
  for (Index i = 0; i < n; ++i) {
    const VectorXd pi = pts.row(i).transpose();
    const VectorXd dc_dw = lin.grad.d_weights.col(i) - sum_kx * (2.0 * (pi - mu) / total) -
                           sum_ky * ((q[i] - q_mean) / total);
    const MatrixXd dc_dp = 2.0 * lin.grad.d_points.middleCols(dim * i, dim) -
                           (2.0 * w[i] / total) * sum_kx +
                           2.0 * lin.grad.d_targets.col(i) * pi.transpose() -
                           (2.0 * w[i] / total) * sum_ky * pi.transpose();
    out.dw.col(i).head(dim) = dc_dw;
    out.dp.block(0, dim * i, dim, dim) = dc_dp;
    const double dr2_dw = (dist2[i] - r2) / total + dr2_dc.dot(dc_dw);
    const Eigen::RowVectorXd dr2_dp =
        (2.0 * w[i] / total) * diff.row(i) + dr2_dc * dc_dp;
    out.dw(dim, i) = dr_dr2 * dr2_dw;
    out.dp.block(dim, dim * i, 1, dim) = dr_dr2 * dr2_dp;
  }
  return out;
}

void check_shapes(const EstimatorInput& in, bool needs_normals, const char* what) {
  if (in.weights.size() != in.points.rows())
    throw std::invalid_argument(std::string(what) + ": weight length mismatch");
  if (needs_normals && in.normals.rows() != in.points.rows())
    throw std::invalid_argument(std::string(what) + ": normals required");
}

Estimate finish(PrimitiveParams params, Core&& core, bool grad) {
  Estimate e;
  e.params = std::move(params);
  e.trivialized = core.trivialized;
  if (grad) {
    GradientBundle g;
    g.d_weights = std::move(core.dw);
    g.d_points = std::move(core.dp);
    g.d_normals = std::move(core.dn);
    e.gradient = std::move(g);
  }
  return e;
}

}  // namespace

Index param_count(PrimitiveType type) {
  switch (type) {
    case PrimitiveType::kPlane:
    case PrimitiveType::kSphere: return 4;
    case PrimitiveType::kCylinder:
    case PrimitiveType::kCone: return 7;
  }
  return 0;
}

VectorXd flatten_params(const PrimitiveParams& params) {
  return std::visit(Overloaded{
                        [](const Plane& s) {
                          VectorXd v(4);
                          v << s.normal, s.d;
                          return v;
                        },
                        [](const Sphere& s) {
                          VectorXd v(4);
                          v << s.center, s.radius;
                          return v;
                        },
                        [](const Cylinder& s) {
                          VectorXd v(7);
                          v << s.axis, s.center, s.radius;
                          return v;
                        },
                        [](const Cone& s) {
                          VectorXd v(7);
                          v << s.apex, s.axis, s.half_angle;
                          return v;
                        },
                    },
                    params);
}

Estimate fit_plane(const EstimatorInput& in, const EstimatorOptions& opts) {
  check_shapes(in, false, "fit_plane");
  Core core = plane_core(in.points, in.weights, opts.compute_gradient);
  if (opts.compute_gradient) core.dn = MatrixXd::Zero(4, 3 * in.points.rows());
  Plane plane{core.params.head<3>(), core.params[3]};
  return finish(plane, std::move(core), opts.compute_gradient);
}

Estimate fit_sphere(const EstimatorInput& in, const EstimatorOptions& opts) {
  check_shapes(in, false, "fit_sphere");
  Core core = sphere_core(in.points, in.weights, opts.ridge, opts.compute_gradient);
  if (opts.compute_gradient) core.dn = MatrixXd::Zero(4, 3 * in.points.rows());
  Sphere sphere{core.params.head<3>(), core.params[3]};
  return finish(sphere, std::move(core), opts.compute_gradient);
}

Estimate fit_cylinder(const EstimatorInput& in, const EstimatorOptions& opts) {
  check_shapes(in, true, "fit_cylinder");
  const bool grad = opts.compute_gradient;
  const auto& pts = in.points;
  const auto& w = in.weights;
  const Index n = pts.rows();
  detail::require_support(w, kMinCylinderPoints, "fit_cylinder");

  const auto axis = detail::homogeneous_lsq(in.normals, w, grad);
  const Vector3d a = axis.solution.v;

  // Orthonormal basis (e1, e2) of the plane through the origin orthogonal to a,
  // built from the coordinate axis least aligned with a.
  Index m = 0;
  a.cwiseAbs().minCoeff(&m);
  const Vector3d h = Vector3d::Unit(m);
  const Vector3d g = h - h.dot(a) * a;
  const double g_norm = g.norm();
  const Vector3d e1 = g / g_norm;
  const Vector3d e2 = a.cross(e1);
  Eigen::Matrix<double, 2, 3> basis;
  basis.row(0) = e1.transpose();
  basis.row(1) = e2.transpose();

  const MatrixXd uv = pts * basis.transpose();
  Core circle = sphere_core(uv, w, opts.ridge, grad);
  const Eigen::Vector2d c2 = circle.params.head<2>();
  const double r = circle.params[2];
  const Vector3d c = e1 * c2.x() + e2 * c2.y();

  Core core;
  core.params.resize(7);
  core.params << a, c, r;
  core.trivialized = circle.trivialized;
  if (grad) {
    const Matrix3d de1 =
        (Matrix3d::Identity() - e1 * e1.transpose()) / g_norm *
        (-(a * h.transpose() + h.dot(a) * Matrix3d::Identity()));
    const Matrix3d de2 = -skew(e1) + skew(a) * de1;

    // Q = d(circle params)/da through the projected coordinates.
    Matrix3d acc_u = Matrix3d::Zero();  // sum_j J_u_j(:,0) P_j^T
    Matrix3d acc_v = Matrix3d::Zero();  // sum_j J_u_j(:,1) P_j^T
    for (Index j = 0; j < n; ++j) {
      const Vector3d pj = pts.row(j).transpose();
      acc_u += circle.dp.col(2 * j) * pj.transpose();
      acc_v += circle.dp.col(2 * j + 1) * pj.transpose();
    }
    const Matrix3d q = acc_u * de1 + acc_v * de2;
    const Matrix3d dc_da = de1 * c2.x() + de2 * c2.y();
    const auto& ja_w = axis.grad.d_weights;
    const auto& ja_n = axis.grad.d_points;

    core.dw.resize(7, n);
    core.dp = MatrixXd::Zero(7, 3 * n);
    core.dn.resize(7, 3 * n);
    for (Index i = 0; i < n; ++i) {
      const Vector3d o_w = circle.dw.col(i) + q * ja_w.col(i);
      const Matrix3d o_p = circle.dp.middleCols<2>(2 * i) * basis;
      const Matrix3d o_n = q * ja_n.middleCols<3>(3 * i);
      core.dw.block<3, 1>(0, i) = ja_w.col(i);
      core.dw.block<3, 1>(3, i) = basis.transpose() * o_w.head<2>() + dc_da * ja_w.col(i);
      core.dw(6, i) = o_w[2];
      core.dp.block<3, 3>(3, 3 * i) = basis.transpose() * o_p.topRows<2>();
      core.dp.block<1, 3>(6, 3 * i) = o_p.row(2);
      core.dn.block<3, 3>(0, 3 * i) = ja_n.middleCols<3>(3 * i);
      core.dn.block<3, 3>(3, 3 * i) =
          basis.transpose() * o_n.topRows<2>() + dc_da * ja_n.middleCols<3>(3 * i);
      core.dn.block<1, 3>(6, 3 * i) = o_n.row(2);
    }
  }
  Cylinder cyl{a, c, r};
  return finish(cyl, std::move(core), grad);
}

Estimate fit_cone(const EstimatorInput& in, const EstimatorOptions& opts) {
  check_shapes(in, true, "fit_cone");
  const bool grad = opts.compute_gradient;
  const auto& pts = in.points;
  const auto& w = in.weights;
  const Index n = pts.rows();
  detail::require_support(w, kMinConePoints, "fit_cone");

  // Apex: intersection of the tangent planes N_i . c = N_i . P_i. Invariant
  // to the sign of each normal.
  const VectorXd y = (in.normals.array() * pts.array()).rowwise().sum();
  const MatrixXd nrm_dyn = in.normals;
  const auto apex = detail::linear_lsq(nrm_dyn, y, w, opts.ridge, grad);
  const Vector3d c = apex.solution.x;
  const double total = w.sum();
  const Vector3d centroid = pts.transpose() * w / total;

  // The normal-endpoint plane only exists for consistently oriented normals.
  // Orient them against a rough axis: the unit apex-to-point directions all
  // make the same angle with the axis, so their endpoints are coplanar too.
  VectorXd flip = VectorXd::Ones(n);
  {
    Eigen::MatrixX3d dirs(n, 3);
    VectorXd wd = w;
    for (Index i = 0; i < n; ++i) {
      const Vector3d v = pts.row(i).transpose() - c;
      const double l = v.norm();
      if (l < 1e-12) {
        dirs.row(i).setZero();
        wd[i] = 0.0;
      } else {
        dirs.row(i) = (v / l).transpose();
      }
    }
    Vector3d rough = (centroid - c).normalized();
    try {
      const Vector3d q = plane_core(dirs, wd, false).params.head<3>();
      rough = q.dot(centroid - c) < 0.0 ? -q : q;
    } catch (const DegenerateInput&) {
    }
    for (Index i = 0; i < n; ++i) {
      if (rough.dot(in.normals.row(i).transpose()) > 0.0) flip[i] = -1.0;
    }
  }
  const Eigen::MatrixX3d nrm = in.normals.array().colwise() * flip.array();

  // Axis: plane through the normal endpoints.
  const Core axis = plane_core(nrm, w, grad);
  const double sign = axis.params.head<3>().dot(centroid - c) < 0.0 ? -1.0 : 1.0;
  const Vector3d a = sign * axis.params.head<3>();

  // Half angle as the weighted mean of per-point opening angles.
  constexpr double kArgClamp = 1.0 - 1e-12;
  VectorXd phi = VectorXd::Zero(n);
  VectorXd dphi = VectorXd::Zero(n);  // d phi / d (a . v_hat)
  VectorXd len = VectorXd::Zero(n);
  Eigen::MatrixX3d vhat = Eigen::MatrixX3d::Zero(n, 3);
  VectorXd wa = w;  // weights of points away from the apex
  for (Index i = 0; i < n; ++i) {
    const Vector3d v = pts.row(i).transpose() - c;
    len[i] = v.norm();
    if (len[i] < 1e-12) {
      wa[i] = 0.0;
      continue;
    }
    vhat.row(i) = (v / len[i]).transpose();
    const double gi = a.dot(vhat.row(i).transpose());
    double ag = std::abs(gi);
    if (ag > kArgClamp) {
      ag = kArgClamp;
    } else {
      dphi[i] = -(gi < 0.0 ? -1.0 : 1.0) / std::sqrt(1.0 - gi * gi);
    }
    phi[i] = std::acos(ag);
  }
  const double total_a = wa.sum();
  if (!(total_a >= kEffectiveWeight)) throw DegenerateInput("fit_cone: all weight at the apex");
  const double theta_raw = wa.dot(phi) / total_a;
  const double theta = std::clamp(theta_raw, kConeAngleMin, kConeAngleMax);
  const bool theta_clamped = theta != theta_raw;

  Core core;
  core.params.resize(7);
  core.params << c, a, theta;
  core.trivialized = apex.solution.trivialized;
  if (grad) {
    // Apex Jacobians.
    MatrixXd dc_dw = apex.grad.d_weights;
    MatrixXd dc_dp(3, 3 * n);
    MatrixXd dc_dn(3, 3 * n);
    for (Index i = 0; i < n; ++i) {
      const Vector3d ky = apex.grad.d_targets.col(i);
      dc_dn.middleCols<3>(3 * i) =
          apex.grad.d_points.middleCols<3>(3 * i) + ky * pts.row(i);
      dc_dp.middleCols<3>(3 * i) = ky * in.normals.row(i);
    }
    const MatrixXd da_dw = sign * axis.dw.topRows<3>();
    // The axis saw the oriented normals; chain back to the inputs.
    MatrixXd da_dn = sign * axis.dp.topRows<3>();
    for (Index i = 0; i < n; ++i) da_dn.middleCols<3>(3 * i) *= flip[i];

    Eigen::RowVector3d gth_a = Eigen::RowVector3d::Zero();
    Eigen::RowVector3d gth_c = Eigen::RowVector3d::Zero();
    MatrixXd gv(1, 3 * n);
    gv.setZero();
    if (!theta_clamped) {
      for (Index i = 0; i < n; ++i) {
        if (wa[i] == 0.0) continue;
        const Vector3d vh = vhat.row(i).transpose();
        const double s = wa[i] * dphi[i] / total_a;
        gth_a += s * vh.transpose();
        const Eigen::RowVector3d g_v =
            s * a.transpose() * (Matrix3d::Identity() - vh * vh.transpose()) / len[i];
        gv.middleCols<3>(3 * i) = g_v;
        gth_c -= g_v;
      }
    }

    core.dw.resize(7, n);
    core.dp.resize(7, 3 * n);
    core.dn.resize(7, 3 * n);
    core.dw.topRows<3>() = dc_dw;
    core.dw.middleRows<3>(3) = da_dw;
    core.dp.topRows<3>() = dc_dp;
    core.dp.middleRows<3>(3).setZero();
    core.dn.topRows<3>() = dc_dn;
    core.dn.middleRows<3>(3) = da_dn;
    for (Index i = 0; i < n; ++i) {
      if (theta_clamped) {
        core.dw(6, i) = 0.0;
        core.dp.block<1, 3>(6, 3 * i).setZero();
        core.dn.block<1, 3>(6, 3 * i).setZero();
        continue;
      }
      const double direct = wa[i] > 0.0 ? (phi[i] - theta_raw) / total_a : 0.0;
      core.dw(6, i) = direct + gth_a * da_dw.col(i) + gth_c * dc_dw.col(i);
      core.dp.block<1, 3>(6, 3 * i) =
          gv.middleCols<3>(3 * i) + gth_c * dc_dp.middleCols<3>(3 * i);
      core.dn.block<1, 3>(6, 3 * i) =
          gth_a * da_dn.middleCols<3>(3 * i) + gth_c * dc_dn.middleCols<3>(3 * i);
    }
  }
  Cone cone{c, a, theta};
  return finish(cone, std::move(core), grad);
}

Estimate fit_primitive(PrimitiveType type, const EstimatorInput& in,
                       const EstimatorOptions& opts) {
  switch (type) {
    case PrimitiveType::kPlane: return fit_plane(in, opts);
    case PrimitiveType::kSphere: return fit_sphere(in, opts);
    case PrimitiveType::kCylinder: return fit_cylinder(in, opts);
    case PrimitiveType::kCone: return fit_cone(in, opts);
  }
  throw std::invalid_argument("fit_primitive: unknown type");
}

std::vector<ColumnEstimate> estimate_all(const Eigen::MatrixX3d& points,
                                         const Eigen::MatrixX3d& normals,
                                         const MembershipMatrix& membership,
                                         const std::vector<PrimitiveType>& types,
                                         const EstimatorOptions& opts) {
  if (static_cast<Index>(types.size()) != membership.num_primitives())
    throw std::invalid_argument("estimate_all: one type per membership column required");
  std::vector<ColumnEstimate> out(types.size());
  for (std::size_t k = 0; k < types.size(); ++k) {
    const VectorXd w = membership.weights.col(static_cast<Index>(k));
    ColumnEstimate& col = out[k];
    try {
      Estimate e = fit_primitive(types[k], EstimatorInput{points, normals, w}, opts);
      auto issues = check_params(e.params);
      if (!issues.empty()) {
        col.diagnostic = "column " + std::to_string(k) + ": " + issues.front();
        continue;
      }
      col.params = std::move(e.params);
      col.trivialized = e.trivialized;
      if (e.trivialized) col.diagnostic = "column " + std::to_string(k) + ": trivialized fit";
    } catch (const DegenerateInput& ex) {
      col.diagnostic = "column " + std::to_string(k) + ": " + ex.what();
    }
  }
  return out;
}

}  // namespace primfit
