#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <variant>
#include <vector>

#include "primfit/rng.hpp"
#include "primfit/types.hpp"

namespace primfit {

class SpecInfeasible : public std::runtime_error {
 public:
  explicit SpecInfeasible(const std::string& what) : std::runtime_error(what) {}
};

struct SceneSpec {
  int k_min = 3;
  int k_max = 12;
  std::array<double, kNumTypes> type_mix = {0.25, 0.25, 0.25, 0.25};
  Index n_points = 8192;
  Index m_samples = 512;
  double noise_amplitude = 0.01;   // uniform along the normal in [-a, a]
  double outlier_fraction = 0.0;
  double min_area_fraction = 0.02;
  std::uint64_t seed = 0;          // batch base seed
};

/// Throws std::invalid_argument describing the first broken constraint.
void check_spec(const SceneSpec& spec);

nlohmann::ordered_json spec_to_json(const SceneSpec& spec);
SceneSpec spec_from_json(const nlohmann::json& j);

// Bounded regions. All direction vectors are unit length.
struct PlanePatch {
  Eigen::Vector3d center;
  Eigen::Vector3d u;  // in-plane, orthogonal to v
  Eigen::Vector3d v;
  double half_u;
  double half_v;
};

// Spherical cap of polar angle up to `max_polar` around `pole`; pi is the
// full sphere.
struct SphereCap {
  Eigen::Vector3d center;
  Eigen::Vector3d pole;
  double radius;
  double max_polar;
};

struct CylinderTube {
  Eigen::Vector3d base;  // center of the bottom circle
  Eigen::Vector3d axis;
  double radius;
  double height;
};

// Lateral cone surface between axial distances t_near < t_far from the apex.
struct ConeFrustum {
  Eigen::Vector3d apex;
  Eigen::Vector3d axis;
  double half_angle;
  double t_near;
  double t_far;
};

using SurfacePatch = std::variant<PlanePatch, SphereCap, CylinderTube, ConeFrustum>;

PrimitiveType patch_type(const SurfacePatch& patch);
/// Primitive of the patch in canonical form (plane normal sign, cylinder
/// center on axis.center = 0).
PrimitiveParams patch_params(const SurfacePatch& patch);
double patch_area(const SurfacePatch& patch);
/// Image of the patch under p -> scale * (p - origin).
SurfacePatch transform_patch(const SurfacePatch& patch, double scale,
                             const Eigen::Vector3d& origin);
/// Random patch with extents suited to the unit cube before normalization.
SurfacePatch random_patch(PrimitiveType type, Rng& rng);

struct SurfaceSample {
  Eigen::MatrixX3d points;
  Eigen::MatrixX3d normals;  // exact, outward for curved surfaces
};

/// Area-uniform samples of the bounded region (inverse-CDF in the polar
/// coordinate for caps and in the slant coordinate for frusta).
SurfaceSample sample_surface(const SurfacePatch& patch, Index m, Rng& rng);

/// Builds the scene for fixed patches: area-proportional point budget, clean
/// samples, normalization of the whole shape (centroid to the origin, largest
/// absolute coordinate to 1), normal-direction noise, and outliers with zero
/// membership rows. Deterministic in (patches, spec, seed).
GroundTruthScene assemble_scene(const std::vector<SurfacePatch>& patches, const SceneSpec& spec,
                                std::uint64_t seed);

/// Random scene: K and types drawn from the spec, patches regenerated until
/// every area fraction reaches min_area_fraction. Throws SpecInfeasible after
/// 1000 regenerations.
GroundTruthScene generate_scene(const SceneSpec& spec, std::uint64_t seed);

/// Random patches for `seed` as used by generate_scene (before normalization).
std::vector<SurfacePatch> generate_patches(const SceneSpec& spec, std::uint64_t seed);

enum class PerturbMode { kSoftmaxDistance, kFlip, kDropout };

/// Imperfect membership for estimator stress tests. Rows unassigned in the
/// scene stay zero.
///  - kSoftmaxDistance: row softmax of -distance / magnitude over the scene
///    primitives (magnitude 0 gives the one-hot nearest primitive)
///  - kFlip: each assigned row moves to a uniformly random column with
///    probability `magnitude`
///  - kDropout: each assigned row is zeroed with probability `magnitude`
MembershipMatrix perturb_membership(const GroundTruthScene& scene, PerturbMode mode,
                                    double magnitude, Rng& rng);

}  // namespace primfit
