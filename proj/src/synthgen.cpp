#include "primfit/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>

#include <Eigen/Geometry>

#include "overloaded.hpp"
#include "primfit/distance.hpp"

namespace primfit {

namespace {

using Eigen::Vector3d;

constexpr double kPi = std::numbers::pi;
constexpr int kMaxRegenerations = 1000;

// Stream ids under the scene seed.
constexpr std::uint64_t kStreamLayout = 1;
constexpr std::uint64_t kStreamPatchBase = 1ull << 32;
constexpr std::uint64_t kStreamCloudBase = 2ull << 32;
constexpr std::uint64_t kStreamSamplesBase = 3ull << 32;
constexpr std::uint64_t kStreamNoise = 4ull << 32;
constexpr std::uint64_t kStreamOutliers = 5ull << 32;

// Orthonormal (e1, e2) completing `a` to a right-handed frame.
std::pair<Vector3d, Vector3d> frame(const Vector3d& a) {
  Eigen::Index m = 0;
  a.cwiseAbs().minCoeff(&m);
  const Vector3d h = Vector3d::Unit(m);
  const Vector3d e1 = (h - h.dot(a) * a).normalized();
  return {e1, a.cross(e1)};
}

}  // namespace

void check_spec(const SceneSpec& spec) {
  if (spec.k_min < 1 || spec.k_max < spec.k_min)
    throw std::invalid_argument("k range must satisfy 1 <= k_min <= k_max");
  double mix = 0.0;
  for (double p : spec.type_mix) {
    if (!(p >= 0.0)) throw std::invalid_argument("type mix entries must be nonnegative");
    mix += p;
  }
  if (std::abs(mix - 1.0) > 1e-9) throw std::invalid_argument("type mix must sum to 1");
  if (spec.n_points < 1) throw std::invalid_argument("n_points must be positive");
  if (spec.m_samples < 1) throw std::invalid_argument("m_samples must be positive");
  if (!(spec.noise_amplitude >= 0.0)) throw std::invalid_argument("noise amplitude must be >= 0");
  if (!(spec.outlier_fraction >= 0.0 && spec.outlier_fraction < 1.0))
    throw std::invalid_argument("outlier fraction must lie in [0, 1)");
  if (!(spec.min_area_fraction >= 0.0 && spec.min_area_fraction < 1.0))
    throw std::invalid_argument("min area fraction must lie in [0, 1)");
  if (spec.min_area_fraction * spec.k_min > 1.0)
    throw std::invalid_argument("min area fraction too large for k_min primitives");
}

nlohmann::ordered_json spec_to_json(const SceneSpec& spec) {
  nlohmann::ordered_json j;
  j["k_min"] = spec.k_min;
  j["k_max"] = spec.k_max;
  j["type_mix"] = spec.type_mix;
  j["n_points"] = spec.n_points;
  j["m_samples"] = spec.m_samples;
  j["noise_amplitude"] = spec.noise_amplitude;
  j["outlier_fraction"] = spec.outlier_fraction;
  j["min_area_fraction"] = spec.min_area_fraction;
  j["seed"] = spec.seed;
  return j;
}

SceneSpec spec_from_json(const nlohmann::json& j) {
  SceneSpec s;
  s.k_min = j.value("k_min", s.k_min);
  s.k_max = j.value("k_max", s.k_max);
  if (j.contains("type_mix")) s.type_mix = j.at("type_mix").get<std::array<double, kNumTypes>>();
  s.n_points = j.value("n_points", s.n_points);
  s.m_samples = j.value("m_samples", s.m_samples);
  s.noise_amplitude = j.value("noise_amplitude", s.noise_amplitude);
  s.outlier_fraction = j.value("outlier_fraction", s.outlier_fraction);
  s.min_area_fraction = j.value("min_area_fraction", s.min_area_fraction);
  s.seed = j.value("seed", s.seed);
  return s;
}

PrimitiveType patch_type(const SurfacePatch& patch) {
  return static_cast<PrimitiveType>(patch.index());
}

PrimitiveParams patch_params(const SurfacePatch& patch) {
  return std::visit(
      Overloaded{
          [](const PlanePatch& p) -> PrimitiveParams {
            const Vector3d n = canonical_sign(p.u.cross(p.v).normalized());
            return Plane{n, n.dot(p.center)};
          },
          [](const SphereCap& p) -> PrimitiveParams { return Sphere{p.center, p.radius}; },
          [](const CylinderTube& p) -> PrimitiveParams {
            const Vector3d a = canonical_sign(p.axis);
            return Cylinder{a, p.base - a.dot(p.base) * a, p.radius};
          },
          [](const ConeFrustum& p) -> PrimitiveParams {
            return Cone{p.apex, p.axis, p.half_angle};
          },
      },
      patch);
}

double patch_area(const SurfacePatch& patch) {
  return std::visit(
      Overloaded{
          [](const PlanePatch& p) { return 4.0 * p.half_u * p.half_v; },
          [](const SphereCap& p) {
            return 2.0 * kPi * p.radius * p.radius * (1.0 - std::cos(p.max_polar));
          },
          [](const CylinderTube& p) { return 2.0 * kPi * p.radius * p.height; },
          [](const ConeFrustum& p) {
            const double c = std::cos(p.half_angle);
            const double s0 = p.t_near / c;
            const double s1 = p.t_far / c;
            return kPi * std::sin(p.half_angle) * (s1 * s1 - s0 * s0);
          },
      },
      patch);
}

SurfacePatch transform_patch(const SurfacePatch& patch, double scale, const Vector3d& origin) {
  auto map = [&](const Vector3d& p) -> Vector3d { return scale * (p - origin); };
  return std::visit(
      Overloaded{
          [&](PlanePatch p) -> SurfacePatch {
            p.center = map(p.center);
            p.half_u *= scale;
            p.half_v *= scale;
            return p;
          },
          [&](SphereCap p) -> SurfacePatch {
            p.center = map(p.center);
            p.radius *= scale;
            return p;
          },
          [&](CylinderTube p) -> SurfacePatch {
            p.base = map(p.base);
            p.radius *= scale;
            p.height *= scale;
            return p;
          },
          [&](ConeFrustum p) -> SurfacePatch {
            p.apex = map(p.apex);
            p.t_near *= scale;
            p.t_far *= scale;
            return p;
          },
      },
      patch);
}

SurfacePatch random_patch(PrimitiveType type, Rng& rng) {
  switch (type) {
    case PrimitiveType::kPlane: {
      PlanePatch p;
      p.center = rng.in_box(0.6);
      const Vector3d n = rng.unit_vector();
      const auto [e1, e2] = frame(n);
      const double rot = rng.uniform(0.0, 2.0 * kPi);
      p.u = std::cos(rot) * e1 + std::sin(rot) * e2;
      p.v = n.cross(p.u);
      p.half_u = rng.uniform(0.15, 0.5);
      p.half_v = rng.uniform(0.15, 0.5);
      return p;
    }
    case PrimitiveType::kSphere: {
      SphereCap p;
      p.center = rng.in_box(0.6);
      p.pole = rng.unit_vector();
      p.radius = rng.uniform(0.15, 0.4);
      const bool full = rng.uniform() < 0.5;
      const double cap = rng.uniform(kPi / 3.0, kPi);
      p.max_polar = full ? kPi : cap;
      return p;
    }
    case PrimitiveType::kCylinder: {
      CylinderTube p;
      const Vector3d mid = rng.in_box(0.6);
      p.axis = rng.unit_vector();
      p.radius = rng.uniform(0.1, 0.3);
      p.height = rng.uniform(0.3, 0.8);
      p.base = mid - 0.5 * p.height * p.axis;
      return p;
    }
    case PrimitiveType::kCone: {
      ConeFrustum p;
      p.apex = rng.in_box(0.6);
      p.axis = rng.unit_vector();
      p.half_angle = rng.uniform(0.2, 0.9);
      p.t_near = rng.uniform(0.1, 0.3);
      p.t_far = p.t_near + rng.uniform(0.3, 0.6);
      return p;
    }
  }
  throw std::invalid_argument("random_patch: unknown type");
}

SurfaceSample sample_surface(const SurfacePatch& patch, Index m, Rng& rng) {
  SurfaceSample out;
  out.points.resize(m, 3);
  out.normals.resize(m, 3);
  std::visit(
      Overloaded{
          [&](const PlanePatch& p) {
            const Vector3d n = canonical_sign(p.u.cross(p.v).normalized());
            for (Index i = 0; i < m; ++i) {
              const double a = rng.uniform(-1.0, 1.0);
              const double b = rng.uniform(-1.0, 1.0);
              out.points.row(i) = (p.center + a * p.half_u * p.u + b * p.half_v * p.v).transpose();
              out.normals.row(i) = n.transpose();
            }
          },
          [&](const SphereCap& p) {
            const auto [e1, e2] = frame(p.pole);
            const double zmin = std::cos(p.max_polar);
            for (Index i = 0; i < m; ++i) {
              const double z = rng.uniform(zmin, 1.0);
              const double psi = rng.uniform(0.0, 2.0 * kPi);
              const double s = std::sqrt(std::max(0.0, 1.0 - z * z));
              const Vector3d dir =
                  (z * p.pole + s * std::cos(psi) * e1 + s * std::sin(psi) * e2).normalized();
              out.points.row(i) = (p.center + p.radius * dir).transpose();
              out.normals.row(i) = dir.transpose();
            }
          },
          [&](const CylinderTube& p) {
            const auto [e1, e2] = frame(p.axis);
            for (Index i = 0; i < m; ++i) {
              const double t = rng.uniform(0.0, p.height);
              const double psi = rng.uniform(0.0, 2.0 * kPi);
              const Vector3d radial = std::cos(psi) * e1 + std::sin(psi) * e2;
              out.points.row(i) = (p.base + t * p.axis + p.radius * radial).transpose();
              out.normals.row(i) = radial.transpose();
            }
          },
          [&](const ConeFrustum& p) {
            const auto [e1, e2] = frame(p.axis);
            const double c = std::cos(p.half_angle);
            const double sn = std::sin(p.half_angle);
            const double s0 = p.t_near / c;
            const double s1 = p.t_far / c;
            for (Index i = 0; i < m; ++i) {
              const double slant = std::sqrt(rng.uniform(s0 * s0, s1 * s1));
              const double psi = rng.uniform(0.0, 2.0 * kPi);
              const Vector3d radial = std::cos(psi) * e1 + std::sin(psi) * e2;
              out.points.row(i) =
                  (p.apex + slant * c * p.axis + slant * sn * radial).transpose();
              out.normals.row(i) = (c * radial - sn * p.axis).transpose();
            }
          },
      },
      patch);
  return out;
}

GroundTruthScene assemble_scene(const std::vector<SurfacePatch>& patches, const SceneSpec& spec,
                                std::uint64_t seed) {
  check_spec(spec);
  if (patches.empty()) throw std::invalid_argument("assemble_scene: no patches");
  const Rng root(seed);
  const Index k = static_cast<Index>(patches.size());
  const Index n = spec.n_points;
  const Index n_out = static_cast<Index>(std::llround(spec.outlier_fraction * static_cast<double>(n)));
  const Index n_surf = n - n_out;

  std::vector<double> area(patches.size());
  for (std::size_t j = 0; j < patches.size(); ++j) area[j] = patch_area(patches[j]);
  const double total_area = std::accumulate(area.begin(), area.end(), 0.0);

  // Largest-remainder split of the surface budget by area.
  std::vector<Index> budget(patches.size());
  std::vector<std::pair<double, std::size_t>> remainder;
  Index assigned = 0;
  for (std::size_t j = 0; j < patches.size(); ++j) {
    const double exact = static_cast<double>(n_surf) * area[j] / total_area;
    budget[j] = static_cast<Index>(std::floor(exact));
    assigned += budget[j];
    remainder.emplace_back(exact - std::floor(exact), j);
  }
  std::stable_sort(remainder.begin(), remainder.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (Index r = 0; r < n_surf - assigned; ++r) ++budget[remainder[static_cast<std::size_t>(r)].second];

  Eigen::MatrixX3d clean(n, 3);
  Eigen::MatrixX3d normals(n, 3);
  std::vector<int> owner(static_cast<std::size_t>(n), -1);
  std::vector<Eigen::MatrixX3d> stored(patches.size());
  Index row = 0;
  for (std::size_t j = 0; j < patches.size(); ++j) {
    Rng cloud_rng = root.split(kStreamCloudBase + j);
    const SurfaceSample s = sample_surface(patches[j], budget[j], cloud_rng);
    clean.middleRows(row, budget[j]) = s.points;
    normals.middleRows(row, budget[j]) = s.normals;
    std::fill(owner.begin() + row, owner.begin() + row + budget[j], static_cast<int>(j));
    row += budget[j];
    Rng sample_rng = root.split(kStreamSamplesBase + j);
    stored[j] = sample_surface(patches[j], spec.m_samples, sample_rng).points;
  }

  // Normalize: centroid of the surface points to the origin, largest absolute
  // coordinate (over cloud and stored samples) to 1.
  const Vector3d centroid =
      n_surf > 0 ? Vector3d(clean.topRows(n_surf).colwise().mean().transpose()) : Vector3d::Zero();
  double extent = 0.0;
  if (n_surf > 0) extent = (clean.topRows(n_surf).rowwise() - centroid.transpose()).cwiseAbs().maxCoeff();
  for (const auto& s : stored) extent = std::max(extent, (s.rowwise() - centroid.transpose()).cwiseAbs().maxCoeff());
  const double scale = extent > 0.0 ? 1.0 / extent : 1.0;

  GroundTruthScene scene;
  scene.seed = seed;
  scene.surfaces.resize(patches.size());
  for (std::size_t j = 0; j < patches.size(); ++j) {
    const SurfacePatch normalized = transform_patch(patches[j], scale, centroid);
    scene.surfaces[j].params = patch_params(normalized);
    scene.surfaces[j].samples = (stored[j].rowwise() - centroid.transpose()) * scale;
    scene.surfaces[j].area_fraction = area[j] / total_area;
  }
  if (n_surf > 0) {
    clean.topRows(n_surf) = (clean.topRows(n_surf).rowwise() - centroid.transpose()) * scale;
  }

  Eigen::MatrixX3d noisy = clean;
  Rng noise_rng = root.split(kStreamNoise);
  for (Index i = 0; i < n_surf; ++i) {
    const double eta = noise_rng.uniform(-spec.noise_amplitude, spec.noise_amplitude);
    noisy.row(i) += eta * normals.row(i);
  }

  Rng outlier_rng = root.split(kStreamOutliers);
  for (Index i = n_surf; i < n; ++i) {
    Vector3d p;
    do {
      p = outlier_rng.in_box(1.0);
    } while (p.cwiseAbs().maxCoeff() <= 0.5);
    clean.row(i) = p.transpose();
    noisy.row(i) = p.transpose();
    normals.row(i) = outlier_rng.unit_vector().transpose();
  }

  scene.cloud.positions = std::move(noisy);
  scene.cloud.normals = std::move(normals);
  scene.clean_positions = std::move(clean);
  scene.membership.binary = true;
  scene.membership.weights = Eigen::MatrixXd::Zero(n, k);
  std::vector<int> labels(static_cast<std::size_t>(n), -1);
  for (Index i = 0; i < n; ++i) {
    const int j = owner[static_cast<std::size_t>(i)];
    if (j < 0) continue;
    scene.membership.weights(i, j) = 1.0;
    labels[static_cast<std::size_t>(i)] = type_index(patch_type(patches[static_cast<std::size_t>(j)]));
  }
  scene.types = TypeMatrix::from_labels(labels);
  return scene;
}

std::vector<SurfacePatch> generate_patches(const SceneSpec& spec, std::uint64_t seed) {
  check_spec(spec);
  const Rng root(seed);
  Rng layout = root.split(kStreamLayout);
  const int k = spec.k_min + static_cast<int>(layout.index(static_cast<std::uint64_t>(spec.k_max - spec.k_min + 1)));

  std::vector<PrimitiveType> types(static_cast<std::size_t>(k));
  for (auto& t : types) {
    const double u = layout.uniform();
    double acc = 0.0;
    t = PrimitiveType::kCone;
    for (int l = 0; l < kNumTypes; ++l) {
      acc += spec.type_mix[static_cast<std::size_t>(l)];
      if (u < acc) {
        t = static_cast<PrimitiveType>(l);
        break;
      }
    }
    // A zero-probability tail type can only be hit through rounding.
    while (spec.type_mix[static_cast<std::size_t>(type_index(t))] == 0.0)
      t = static_cast<PrimitiveType>(type_index(t) - 1);
  }

  std::vector<int> attempts(static_cast<std::size_t>(k), 0);
  auto make = [&](std::size_t j) {
    Rng rng = root.split(kStreamPatchBase + (j << 16) + static_cast<std::uint64_t>(attempts[j]));
    return random_patch(types[j], rng);
  };
  std::vector<SurfacePatch> patches;
  for (std::size_t j = 0; j < types.size(); ++j) patches.push_back(make(j));

  int regenerations = 0;
  while (true) {
    std::vector<double> area(patches.size());
    for (std::size_t j = 0; j < patches.size(); ++j) area[j] = patch_area(patches[j]);
    const double total = std::accumulate(area.begin(), area.end(), 0.0);
    const auto smallest = std::min_element(area.begin(), area.end());
    if (*smallest / total >= spec.min_area_fraction) break;
    if (++regenerations > kMaxRegenerations)
      throw SpecInfeasible("could not meet the minimum area fraction in 1000 regenerations");
    const auto j = static_cast<std::size_t>(smallest - area.begin());
    ++attempts[j];
    patches[j] = make(j);
  }
  return patches;
}

GroundTruthScene generate_scene(const SceneSpec& spec, std::uint64_t seed) {
  return assemble_scene(generate_patches(spec, seed), spec, seed);
}

MembershipMatrix perturb_membership(const GroundTruthScene& scene, PerturbMode mode,
                                    double magnitude, Rng& rng) {
  const auto& w = scene.membership.weights;
  const Index n = w.rows();
  const Index k = w.cols();
  MembershipMatrix out;
  out.weights = Eigen::MatrixXd::Zero(n, k);
  for (Index i = 0; i < n; ++i) {
    Index current = 0;
    if (w.row(i).maxCoeff(&current) <= 0.0) continue;
    switch (mode) {
      case PerturbMode::kSoftmaxDistance: {
        Eigen::VectorXd d(k);
        for (Index j = 0; j < k; ++j)
          d[j] = distance(scene.cloud.positions.row(i).transpose(),
                          scene.surfaces[static_cast<std::size_t>(j)].params);
        Index best = 0;
        d.minCoeff(&best);
        if (magnitude <= 0.0) {
          out.weights(i, best) = 1.0;
        } else {
          const Eigen::ArrayXd e = (-(d.array() - d[best]) / magnitude).exp();
          out.weights.row(i) = (e / e.sum()).matrix().transpose();
        }
        break;
      }
      case PerturbMode::kFlip: {
        Index col = current;
        if (rng.uniform() < magnitude) col = static_cast<Index>(rng.index(static_cast<std::uint64_t>(k)));
        out.weights(i, col) = 1.0;
        break;
      }
      case PerturbMode::kDropout: {
        if (rng.uniform() >= magnitude) out.weights.row(i) = w.row(i);
        break;
      }
    }
  }
  out.binary = mode != PerturbMode::kSoftmaxDistance || magnitude <= 0.0;
  return out;
}

}  // namespace primfit
