#pragma once

#include <Eigen/Core>

#include <optional>
#include <vector>

#include "primfit/matching.hpp"
#include "primfit/types.hpp"

namespace primfit {

struct LossBreakdown {
  double seg = 0.0;
  double norm = 0.0;
  double type_ = 0.0;
  double res = 0.0;
  double axis = 0.0;
  double total = 0.0;  // seg + norm + type_ + res + axis, summed in that order

  nlohmann::ordered_json to_json() const;
};

/// (1/K) sum over ground-truth columns of 1 - RIoU with the matched predicted
/// column; unmatched ground truth contributes 1. K = 0 gives 0.
double seg_loss(const MembershipMatrix& w, const MembershipMatrix& w_hat, const Assignment& match);

/// (1/N) sum (1 - |N_i . N_hat_i|).
double normal_loss(const Eigen::MatrixX3d& n, const Eigen::MatrixX3d& n_hat);

/// (1/N) sum over assigned points of the cross entropy -sum_l T_il ln T_hat_il
/// (natural log, argument floored at 1e-12). Normalized by all N points.
double type_loss(const TypeMatrix& t, const Eigen::MatrixXd& t_hat, const MembershipMatrix& w);

/// Mean over the ground-truth surfaces that have a prediction of the mean
/// squared distance of the stored samples to it. `matched[k]` is the
/// prediction for surface k, already expressed in the surface's type when
/// possible.
double residual_loss(const std::vector<BoundedSurface>& surfaces,
                     const std::vector<std::optional<PrimitiveParams>>& matched);

/// Mean over matched primitives of 1 - Theta with Theta = |a . a_hat| for
/// plane/cylinder/cone ground truth and 1 for spheres. A prediction without
/// an axis scores Theta = 0.
double axis_loss(const std::vector<PrimitiveParams>& gt,
                 const std::vector<std::optional<PrimitiveParams>>& matched);

/// Per-point soft types of a fit: its own point_types when present, otherwise
/// sum_k W_hat_ik onehot(type_k) plus the leftover row mass spread uniformly.
Eigen::MatrixXd point_type_probabilities(const FitResult& fit);

/// Predictions re-expressed in the ground-truth types: for each matched pair
/// whose predicted type differs from the ground-truth type, the ground-truth
/// type's estimator is run on the predicted membership column. Unmatched
/// surfaces map to std::nullopt. Falls back to the predicted parameters when
/// the re-estimate fails.
std::vector<std::optional<PrimitiveParams>> matched_in_gt_types(const GroundTruthScene& scene,
                                                                const FitResult& fit,
                                                                const Assignment& match);

/// RIoU matching followed by all five terms.
LossBreakdown total_loss(const GroundTruthScene& scene, const FitResult& fit);

}  // namespace primfit
