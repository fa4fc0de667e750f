#pragma once

#include <Eigen/Core>

#include <utility>
#include <vector>

#include "primfit/types.hpp"

namespace primfit {

/// Relaxed IoU  w.w_hat / (|w|_1 + |w_hat|_1 - w.w_hat). Two all-zero vectors
/// score 0, so empty columns never look like perfect matches.
double riou(const Eigen::VectorXd& w, const Eigen::VectorXd& w_hat);

// Partial bijection between ground-truth rows and predicted columns.
struct Assignment {
  std::vector<std::pair<Index, Index>> pairs;  // (gt, pred), ascending gt
  std::vector<Index> unmatched_gt;
  std::vector<Index> unmatched_pred;
  double total_score = 0.0;  // summed cost of the pairs, in pair order

  /// Predicted index matched to ground truth `gt`, or -1.
  Index pred_for(Index gt) const;
};

/// Minimum-cost assignment of size min(K, K') for a K x K' cost matrix.
/// Among optimal assignments (totals within 1e-9 relative) the
/// lexicographically smallest pair sequence is returned: lower ground-truth
/// indices are matched first, each to the lowest feasible column.
Assignment hungarian(const Eigen::MatrixXd& cost);

struct PrimitiveMatch {
  Assignment assignment;
  std::vector<double> pair_riou;  // aligned with assignment.pairs
  double mean_riou = 0.0;         // over matched pairs; 0 when there are none
};

/// Pairs ground-truth and predicted membership columns by maximal total RIoU
/// (cost 1 - RIoU).
PrimitiveMatch match_primitives(const MembershipMatrix& w, const MembershipMatrix& w_hat);

/// Residual-based matching: cost(k, j) is the mean squared distance of the
/// stored samples of surface k to primitive j.
Assignment match_by_residual(const std::vector<BoundedSurface>& surfaces,
                             const std::vector<PrimitiveParams>& prims);

}  // namespace primfit
