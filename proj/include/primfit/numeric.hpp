#pragma once

#include <Eigen/Core>

#include <stdexcept>
#include <string>

namespace primfit {

/// Thrown when a segment carries too little weight (or too few weighted rows)
/// for the requested solve.
class DegenerateInput : public std::runtime_error {
 public:
  explicit DegenerateInput(const std::string& what) : std::runtime_error(what) {}
};

inline constexpr double kEffectiveWeight = 1e-12;
/// Floor on eigenvalue gaps in the SVD backward pass.
inline constexpr double kSvdGradClamp = 1e-10;
inline constexpr double kDefaultRidge = 1e-8;
/// Least-squares problems whose weighted design matrix exceeds this condition
/// number are replaced by the zero problem.
inline constexpr double kMaxConditionNumber = 1e5;

struct HomogeneousLsqSolution {
  Eigen::Vector3d v;   // unit, first nonzero component positive
  double sigma_min;    // smallest singular value of diag(w)^1/2 X
  double cond;         // sigma_max / sigma_min, +inf when sigma_min == 0
};

// Jacobians of a kernel output (rows) with respect to its inputs. Point-like
// inputs are flattened row-major: column 3*i + c holds coordinate c of row i.
// Blocks that do not apply to a kernel are left empty.
struct GradientBundle {
  Eigen::MatrixXd d_weights;  // out x N
  Eigen::MatrixXd d_points;   // out x (N*d); the design matrix X for raw kernels
  Eigen::MatrixXd d_normals;  // out x (N*3)
  Eigen::MatrixXd d_targets;  // out x N; targets y of the linear kernel
  Eigen::VectorXd d_lambda;   // out; ridge weight of the linear kernel
};

/// argmin over unit a of |diag(w)^1/2 X a|^2, from the eigendecomposition of
/// the 3x3 Gram matrix X^T diag(w) X.
HomogeneousLsqSolution weighted_homogeneous_lsq(const Eigen::MatrixX3d& x,
                                                const Eigen::VectorXd& w);

/// d v / d w (3 x N) and d v / d X (3 x 3N) for the sign-fixed solution. Eigen
/// gaps smaller than kSvdGradClamp are clamped so the result stays finite.
GradientBundle weighted_homogeneous_lsq_grad(const Eigen::MatrixX3d& x, const Eigen::VectorXd& w);

struct LinearLsqSolution {
  Eigen::VectorXd x;
  bool trivialized = false;
  double cond = 0.0;  // of diag(w)^1/2 X
};

/// Ridge-regularized weighted least squares
///   argmin_c |diag(w)^1/2 (X c - y)|^2 + lambda |c|^2
/// solved by Cholesky on the normal equations. When cond(diag(w)^1/2 X) exceeds
/// kMaxConditionNumber the design matrix is replaced by zero and the zero
/// vector is returned with `trivialized` set.
LinearLsqSolution weighted_linear_lsq(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                      const Eigen::VectorXd& w, double lambda = kDefaultRidge);

/// Gradients of the solution with respect to w, X (d_points), y (d_targets)
/// and lambda, by implicit differentiation of the normal equations. All zero
/// when the problem is trivialized.
GradientBundle weighted_linear_lsq_grad(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                                        const Eigen::VectorXd& w, double lambda = kDefaultRidge);

/// sigma_max / sigma_min; +infinity when sigma_min is zero.
double condition_number(const Eigen::MatrixXd& a);

namespace detail {

// Forward solve plus Jacobians in one pass; used by the estimators.
struct HomogeneousWithGrad {
  HomogeneousLsqSolution solution;
  GradientBundle grad;  // d_weights, d_points
};
HomogeneousWithGrad homogeneous_lsq(const Eigen::MatrixX3d& x, const Eigen::VectorXd& w,
                                    bool with_grad);

struct LinearWithGrad {
  LinearLsqSolution solution;
  GradientBundle grad;  // d_weights, d_points, d_targets, d_lambda
};
LinearWithGrad linear_lsq(const Eigen::MatrixXd& x, const Eigen::VectorXd& y,
                          const Eigen::VectorXd& w, double lambda, bool with_grad);

// Throws DegenerateInput unless sum(w) and the count of rows with weight above
// kEffectiveWeight reach the given minimums.
void require_support(const Eigen::VectorXd& w, Eigen::Index min_rows, const char* what);

}  // namespace detail

}  // namespace primfit
