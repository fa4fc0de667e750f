#include "primfit/numeric.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <limits>

#include "primfit/types.hpp"

namespace primfit {

namespace detail {

void require_support(const Eigen::VectorXd& w, Eigen::Index min_rows, const char* what) {
  const double total = w.sum();
  if (!(total >= kEffectiveWeight)) {
    throw DegenerateInput(std::string(what) + ": total weight below 1e-12");
  }
  const Eigen::Index support = (w.array() > kEffectiveWeight).count();
  if (support < min_rows) {
    throw DegenerateInput(std::string(what) + ": " + std::to_string(support) +
                          " weighted rows, need " + std::to_string(min_rows));
  }
}

namespace {

// 1 / (sign(diff) * max(|diff|, eps)); a zero gap is treated as negative since
// the eigenvalues are sorted ascending.
double clamped_inverse_gap(double diff) {
  const double sign = diff > 0.0 ? 1.0 : -1.0;
  return 1.0 / (sign * std::max(std::abs(diff), kSvdGradClamp));
}

}  // namespace

HomogeneousWithGrad homogeneous_lsq(const Eigen::MatrixX3d& x, const Eigen::VectorXd& w,
                                    bool with_grad) {
  const Index n = x.rows();
  if (w.size() != n) throw std::invalid_argument("homogeneous_lsq: weight length mismatch");
  require_support(w, 3, "weighted_homogeneous_lsq");

  const Eigen::Matrix3d gram = x.transpose() * w.asDiagonal() * x;
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(gram);
  const Eigen::Vector3d lambdas = eig.eigenvalues();
  const Eigen::Matrix3d u = eig.eigenvectors();

  HomogeneousWithGrad out;
  out.solution.v = canonical_sign(u.col(0));
  const double lmin = std::max(lambdas[0], 0.0);
  const double lmax = std::max(lambdas[2], 0.0);
  out.solution.sigma_min = std::sqrt(lmin);
  out.solution.cond = lmin > 0.0 ? std::sqrt(lmax / lmin) : std::numeric_limits<double>::infinity();
  if (!with_grad) return out;

  // dv = M dG v with M = sum_j u_j u_j^T / (lambda_0 - lambda_j).
  const Eigen::Vector3d& v = out.solution.v;
  Eigen::Matrix3d m = Eigen::Matrix3d::Zero();
  for (int j = 1; j < 3; ++j) {
    m += clamped_inverse_gap(lambdas[0] - lambdas[j]) * u.col(j) * u.col(j).transpose();
  }
  out.grad.d_weights.resize(3, n);
  out.grad.d_points.resize(3, 3 * n);
  for (Index i = 0; i < n; ++i) {
    const Eigen::Vector3d xi = x.row(i).transpose();
    const double proj = xi.dot(v);
    out.grad.d_weights.col(i) = m * xi * proj;
    out.grad.d_points.middleCols<3>(3 * i) =
        w[i] * m * (proj * Eigen::Matrix3d::Identity() + xi * v.transpose());
  }
  return out;
}

LinearWithGrad linear_lsq(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, double lambda, bool with_grad) {
  const Index n = x.rows();
  const Index d = x.cols();
  if (y.size() != n || w.size() != n)
    throw std::invalid_argument("linear_lsq: dimension mismatch");
  if (lambda < 0.0) throw std::invalid_argument("linear_lsq: negative ridge weight");
  require_support(w, 1, "weighted_linear_lsq");

  LinearWithGrad out;
  const Eigen::MatrixXd gram = x.transpose() * w.asDiagonal() * x;
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram, Eigen::EigenvaluesOnly);
  const double lmin = std::max(eig.eigenvalues()[0], 0.0);
  const double lmax = std::max(eig.eigenvalues()[d - 1], 0.0);
  out.solution.cond =
      lmin > 0.0 ? std::sqrt(lmax / lmin) : std::numeric_limits<double>::infinity();

  auto trivial = [&] {
    out.solution.x = Eigen::VectorXd::Zero(d);
    out.solution.trivialized = true;
    if (with_grad) {
      out.grad.d_weights = Eigen::MatrixXd::Zero(d, n);
      out.grad.d_points = Eigen::MatrixXd::Zero(d, d * n);
      out.grad.d_targets = Eigen::MatrixXd::Zero(d, n);
      out.grad.d_lambda = Eigen::VectorXd::Zero(d);
    }
    return out;
  };
  if (!(out.solution.cond <= kMaxConditionNumber)) return trivial();

  const Eigen::MatrixXd a = gram + lambda * Eigen::MatrixXd::Identity(d, d);
  const Eigen::VectorXd b = x.transpose() * w.asDiagonal() * y;
  Eigen::LLT<Eigen::MatrixXd> llt(a);
  if (llt.info() != Eigen::Success) return trivial();
  out.solution.x = llt.solve(b);
  if (!with_grad) return out;

  // dc = A^-1 (db - dA c)
  const Eigen::VectorXd& c = out.solution.x;
  const Eigen::MatrixXd a_inv = llt.solve(Eigen::MatrixXd::Identity(d, d));
  out.grad.d_weights.resize(d, n);
  out.grad.d_points.resize(d, d * n);
  out.grad.d_targets.resize(d, n);
  for (Index i = 0; i < n; ++i) {
    const Eigen::VectorXd xi = x.row(i).transpose();
    const double resid = y[i] - xi.dot(c);
    const Eigen::VectorXd a_inv_xi = a_inv * xi;
    out.grad.d_weights.col(i) = a_inv_xi * resid;
    out.grad.d_targets.col(i) = a_inv_xi * w[i];
    out.grad.d_points.middleCols(d * i, d) =
        w[i] * a_inv * (resid * Eigen::MatrixXd::Identity(d, d) - xi * c.transpose());
  }
  out.grad.d_lambda = -a_inv * c;
  return out;
}

}  // namespace detail

HomogeneousLsqSolution weighted_homogeneous_lsq(const Eigen::MatrixX3d& x,
                                                const Eigen::VectorXd& w) {
  return detail::homogeneous_lsq(x, w, false).solution;
}

GradientBundle weighted_homogeneous_lsq_grad(const Eigen::MatrixX3d& x, const Eigen::VectorXd& w) {
  return detail::homogeneous_lsq(x, w, true).grad;
}

LinearLsqSolution weighted_linear_lsq(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& w, double lambda) {
  return detail::linear_lsq(x, y, w, lambda, false).solution;
}

GradientBundle weighted_linear_lsq_grad(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& w, double lambda) {
  return detail::linear_lsq(x, y, w, lambda, true).grad;
}

double condition_number(const Eigen::MatrixXd& a) {
  if (a.rows() < a.cols()) return std::numeric_limits<double>::infinity();
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a);
  const auto& s = svd.singularValues();
  if (s.size() == 0) return std::numeric_limits<double>::infinity();
  const double smin = s[s.size() - 1];
  if (smin == 0.0) return std::numeric_limits<double>::infinity();
  return s[0] / smin;
}

}  // namespace primfit
