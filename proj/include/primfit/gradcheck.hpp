#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <string>
#include <vector>

#include "primfit/types.hpp"

namespace primfit {

inline constexpr double kFiniteDifferenceStep = 1e-6;
inline constexpr double kGradcheckTolerance = 1e-3;
// Entries smaller than this are compared absolutely: central differences at
// step 1e-6 carry ~1e-10 of rounding noise, so relative error is meaningless
// for Jacobian entries near zero.
inline constexpr double kGradcheckFloor = 1e-6;

/// |a - b| / max(|a|, |b|, kGradcheckFloor).
double relative_error(double analytic, double numeric);

struct JacobianComparison {
  double max_rel_weights = 0.0;
  double max_rel_points = 0.0;
  double max_rel_normals = 0.0;
  bool finite = true;

  double max_rel() const;
};

/// Compares the analytic Jacobians of the type's estimator with central finite
/// differences in every weight, point coordinate and normal coordinate.
JacobianComparison check_estimator_gradient(PrimitiveType type, const Eigen::MatrixX3d& points,
                                            const Eigen::MatrixX3d& normals,
                                            const Eigen::VectorXd& weights,
                                            double step = kFiniteDifferenceStep);

struct GradcheckSegment {
  Eigen::MatrixX3d points;
  Eigen::MatrixX3d normals;
  Eigen::VectorXd weights;
};

/// Random well-conditioned segment of the given type: samples of a random
/// bounded surface with small point and normal noise and weights in [0.2, 1].
GradcheckSegment random_segment(PrimitiveType type, std::uint64_t seed, Index n = 40);

struct DegenerateCase {
  std::string name;
  bool finite = false;
  bool trivialized = false;
  bool expect_trivialized = false;

  bool passed() const { return finite && (trivialized || !expect_trivialized); }
};

/// Inputs at the stability guards: repeated singular values, flat sphere
/// segments, parallel normals for cylinders and cones, near-zero cone angles.
std::vector<DegenerateCase> run_degenerate_suite(PrimitiveType type);

struct GradcheckReport {
  PrimitiveType type = PrimitiveType::kPlane;
  int trials = 0;
  int failed_trials = 0;
  double max_rel_error = 0.0;
  double max_rel_weights = 0.0;
  double max_rel_points = 0.0;
  double max_rel_normals = 0.0;
  bool all_finite = true;
  std::vector<DegenerateCase> degenerate;

  bool passed() const;
  nlohmann::ordered_json to_json() const;
};

GradcheckReport run_gradcheck(PrimitiveType type, int trials, std::uint64_t seed,
                              bool degenerate_suite = true);

}  // namespace primfit
