#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>
#include <optional>
#include <vector>

#include "primfit/types.hpp"

namespace primfit {

/// Unoriented normals from PCA of the k nearest neighbours of every point.
Eigen::MatrixX3d estimate_normals(const Eigen::MatrixX3d& points, int k = 16);

// Simplified multi-primitive RANSAC: local minimal-set candidates, inlier
// scoring on a subsample, greedy extraction, best of several restarts.
struct RansacConfig {
  double distance_epsilon = 0.02;
  double normal_epsilon_deg = 20.0;
  int min_inliers = 50;
  int max_candidates_per_round = 200;
  int rounds = 3;
  std::uint64_t seed = 0;
  int max_primitives = 24;
  double sample_radius = 0.2;    // minimal sets are drawn around a seed point
  int score_subsample = 2000;    // points used to rank candidates
  std::array<bool, kNumTypes> allowed_types = {true, true, true, true};

  nlohmann::ordered_json to_json() const;
};

/// Optional restrictions for ransac_fit.
struct RansacInputs {
  const std::vector<Index>* subset = nullptr;  // only these rows take part
  const Eigen::MatrixXd* point_types = nullptr;  // N x 4; seeds pick their argmax type
};

/// Greedy detector. Membership is binary from the inlier sets; the returned
/// normals are the ones passed in. May return no primitives.
FitResult ransac_fit(const Eigen::MatrixX3d& points, const Eigen::MatrixX3d& normals,
                     const RansacConfig& cfg, const RansacInputs& extra = {});

/// One RANSAC primitive per column of `segments` (points with nonzero weight),
/// membership restricted to the detected inliers.
FitResult ransac_fit_segments(const Eigen::MatrixX3d& points, const Eigen::MatrixX3d& normals,
                              const MembershipMatrix& segments, const RansacConfig& cfg,
                              const Eigen::MatrixXd* point_types = nullptr);

/// Exact candidate through a minimal set, or nullopt when the set is
/// degenerate. Sizes: plane 1, sphere 2, cylinder 2, cone 3 points.
std::optional<PrimitiveParams> minimal_candidate(PrimitiveType type, const Eigen::MatrixX3d& points,
                                                 const Eigen::MatrixX3d& normals);

enum class AssignBy { kDistance, kAlgebraicEnergy };

struct EmConfig {
  int iterations = 20;
  double temperature = 1e-4;  // soft assignment: softmax of -distance^2 / temperature
  bool hard_assign = true;
  int k_max = 24;
  double cap = 0.03;          // hard mode: farther points stay unassigned; <= 0 disables
  AssignBy assign_by = AssignBy::kDistance;
  double min_change_fraction = 0.001;

  nlohmann::ordered_json to_json() const;
};

struct EmTrace {
  std::vector<double> energy;          // after each full iteration
  std::vector<double> energy_assign;   // after each assignment half-step
  std::vector<Index> changes;          // rows whose assignment changed
  std::vector<std::string> collapsed;  // columns dropped, with reason
  int iterations = 0;
};

/// Per-point energy used by the algebraic assignment and the energy trace:
/// plane (a.p - d)^2, sphere (|p - c|^2 - r^2)^2, otherwise distance^2.
double algebraic_energy(const Eigen::Vector3d& p, const PrimitiveParams& prim);

/// Total algebraic energy of a hard assignment: sum over rows of the energy
/// w.r.t. the primitive of their largest weight; unassigned rows add 0.
double total_energy(const Eigen::MatrixX3d& points, const MembershipMatrix& w,
                    const std::vector<PrimitiveParams>& prims);

/// Alternates membership assignment and per-column re-estimation, starting
/// from the parameters of `init`. Column types follow vote_types of the
/// current membership. Stops after cfg.iterations or when fewer than
/// min_change_fraction of the rows change.
FitResult em_fit(const Eigen::MatrixX3d& points, const Eigen::MatrixX3d& normals, const FitResult& init,
                 const EmConfig& cfg, EmTrace* trace = nullptr);

inline constexpr double kDiscardFraction = 0.005;

/// Drops columns whose mean membership sum_i W_ik / N is below `threshold`;
/// remaining columns keep their order.
FitResult discard_small(const FitResult& fit, double threshold = kDiscardFraction);

/// t_k = argmax_l sum_i T_il W_ik; ties go to the lowest type index.
std::vector<PrimitiveType> vote_types(const Eigen::MatrixXd& t_hat, const Eigen::MatrixXd& w_hat);

/// Estimators on the ground-truth membership, normals and types: the
/// prediction a perfect segmentation network would enable. Failed columns
/// fall back to the ground-truth parameters and are listed in diagnostics.
FitResult oracle_fit(const GroundTruthScene& scene);

/// Ground-truth parameters, membership, normals and types copied verbatim.
FitResult ground_truth_fit(const GroundTruthScene& scene);

}  // namespace primfit
