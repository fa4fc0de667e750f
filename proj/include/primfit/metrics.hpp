#pragma once

#include <Eigen/Core>

#include <map>
#include <optional>
#include <vector>

#include "primfit/matching.hpp"
#include "primfit/types.hpp"

namespace primfit {

inline const std::vector<double> kDefaultEpsilons = {0.01, 0.02};
inline const std::vector<double> kDefaultScaleBins = {0.0, 0.05, 0.1, 0.2, 0.4, 1.0};

/// Hard IoU between binary column w and the one-hot conversion of w_hat,
/// averaged over the K ground-truth columns (unmatched ones score 0).
double seg_mean_iou(const MembershipMatrix& w, const MembershipMatrix& w_hat, const Assignment& match);

/// Argmax one-hot conversion of each row; all-zero rows stay zero and ties go
/// to the lowest column.
Eigen::MatrixXd one_hot_rows(const Eigen::MatrixXd& w);

/// Percentage of matched pairs whose types agree; absent without pairs.
std::optional<double> type_accuracy(const Assignment& match, const std::vector<PrimitiveType>& t,
                                    const std::vector<PrimitiveType>& t_hat);

/// Mean of acos|N_i . N_hat_i| in degrees.
double point_normal_diff_deg(const Eigen::MatrixX3d& n, const Eigen::MatrixX3d& n_hat);

/// Mean of acos(Theta) in degrees over matched pairs with the correct type;
/// absent when no pair has the correct type.
std::optional<double> axis_diff_deg(const Assignment& match, const std::vector<PrimitiveParams>& gt,
                                    const std::vector<PrimitiveParams>& pred);

struct ResidualStats {
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over pairs
};

/// Per matched pair, the mean unsquared distance of the surface samples to the
/// predicted primitive (its own type); mean and std over pairs. Absent
/// without pairs.
std::optional<ResidualStats> sk_residual(const Assignment& match,
                                         const std::vector<BoundedSurface>& surfaces,
                                         const std::vector<PrimitiveParams>& pred);

/// Fraction of surface k's samples within eps of its matched primitive.
double surface_coverage(const BoundedSurface& surface, const PrimitiveParams& pred, double eps);

/// (1/K) sum over surfaces of the covered sample fraction, x100; unmatched
/// surfaces contribute 0.
double sk_coverage(const Assignment& match, const std::vector<BoundedSurface>& surfaces,
                   const std::vector<PrimitiveParams>& pred, double eps);

/// Percentage of points within eps of the nearest predicted primitive. With
/// `mask`, only rows where mask[i] is true are counted.
double p_coverage(const Eigen::MatrixX3d& points, const std::vector<PrimitiveParams>& pred, double eps,
                  const std::vector<bool>* mask = nullptr);

struct ScaleBin {
  double lo = 0.0;
  double hi = 0.0;
  int count = 0;                  // surfaces with area fraction in [lo, hi)
  std::optional<double> coverage;  // mean coverage x100; absent when empty
};

/// {S_k} coverage grouped by area fraction; the last bin is closed on the
/// right.
std::vector<ScaleBin> scale_binned_sk_coverage(const Assignment& match,
                                               const std::vector<BoundedSurface>& surfaces,
                                               const std::vector<PrimitiveParams>& pred, double eps,
                                               const std::vector<double>& edges = kDefaultScaleBins);

struct MetricsBundle {
  std::string shape_id;
  int num_gt = 0;
  int num_pred = 0;
  int num_matched = 0;
  double seg_mean_iou = 0.0;
  std::optional<double> type_accuracy_pct;
  std::optional<double> point_normal_deg;
  std::optional<double> primitive_axis_deg;
  std::optional<double> sk_residual_mean;
  std::optional<double> sk_residual_std;
  std::map<double, double> sk_coverage;
  std::map<double, double> p_coverage;           // all input points
  std::map<double, double> p_coverage_assigned;  // points with a nonzero gt row
  std::map<double, std::vector<ScaleBin>> scale_bins;
  std::vector<double> surface_area_fractions;
  std::map<double, std::vector<double>> surface_coverage;  // per gt surface x100

  nlohmann::ordered_json to_json() const;
};

enum class MatchMode { kRiou, kResidual };

struct EvalOptions {
  std::vector<double> epsilons = kDefaultEpsilons;
  std::vector<double> scale_edges = kDefaultScaleBins;
  MatchMode match = MatchMode::kRiou;
};

/// All metrics for one shape after matching predicted to ground-truth
/// primitives.
MetricsBundle evaluate_shape(const GroundTruthScene& scene, const FitResult& fit,
                             const EvalOptions& opts = {});

}  // namespace primfit
