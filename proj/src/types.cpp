#include "primfit/types.hpp"

#include <cmath>
#include <numbers>
#include <sstream>
#include <stdexcept>

#include "overloaded.hpp"
#include "primfit/distance.hpp"

namespace primfit {

namespace {

constexpr double kUnitTol = 1e-9;
constexpr double kOnSurfaceTol = 1e-7;
constexpr double kRowSumTol = 1e-9;

bool is_unit(const Eigen::Vector3d& v) {
  return v.allFinite() && std::abs(v.norm() - 1.0) <= kUnitTol;
}

std::string join(const std::vector<std::string>& parts) {
  std::string out;
  for (std::size_t i = 0; i < parts.size(); ++i) {
    if (i) out += "; ";
    out += parts[i];
  }
  return out;
}

}  // namespace

std::string_view type_name(PrimitiveType type) {
  switch (type) {
    case PrimitiveType::kPlane: return "plane";
    case PrimitiveType::kSphere: return "sphere";
    case PrimitiveType::kCylinder: return "cylinder";
    case PrimitiveType::kCone: return "cone";
  }
  return "unknown";
}

PrimitiveType parse_type(std::string_view name) {
  for (PrimitiveType t : kAllTypes) {
    if (type_name(t) == name) return t;
  }
  throw std::invalid_argument("unknown primitive type '" + std::string(name) + "'");
}

PrimitiveType type_of(const PrimitiveParams& params) {
  return static_cast<PrimitiveType>(params.index());
}

std::optional<Eigen::Vector3d> axis_of(const PrimitiveParams& params) {
  return std::visit(Overloaded{
                        [](const Plane& s) -> std::optional<Eigen::Vector3d> { return s.normal; },
                        [](const Sphere&) -> std::optional<Eigen::Vector3d> { return std::nullopt; },
                        [](const Cylinder& s) -> std::optional<Eigen::Vector3d> { return s.axis; },
                        [](const Cone& s) -> std::optional<Eigen::Vector3d> { return s.axis; },
                    },
                    params);
}

Eigen::Vector3d canonical_sign(const Eigen::Vector3d& v, double tol) {
  for (int c = 0; c < 3; ++c) {
    if (std::abs(v[c]) > tol) return v[c] < 0.0 ? Eigen::Vector3d(-v) : v;
  }
  return v;
}

std::vector<std::string> check_params(const PrimitiveParams& params) {
  std::vector<std::string> out;
  std::visit(Overloaded{
                 [&](const Plane& s) {
                   if (!is_unit(s.normal)) out.push_back("plane normal is not unit length");
                   if (!std::isfinite(s.d)) out.push_back("plane offset is not finite");
                 },
                 [&](const Sphere& s) {
                   if (!s.center.allFinite()) out.push_back("sphere center is not finite");
                   if (!(s.radius > 0.0) || !std::isfinite(s.radius))
                     out.push_back("sphere radius must be positive");
                 },
                 [&](const Cylinder& s) {
                   if (!is_unit(s.axis)) out.push_back("cylinder axis is not unit length");
                   if (!s.center.allFinite()) out.push_back("cylinder center is not finite");
                   if (!(s.radius > 0.0) || !std::isfinite(s.radius))
                     out.push_back("cylinder radius must be positive");
                 },
                 [&](const Cone& s) {
                   if (!is_unit(s.axis)) out.push_back("cone axis is not unit length");
                   if (!s.apex.allFinite()) out.push_back("cone apex is not finite");
                   if (!(s.half_angle > 0.0 && s.half_angle < std::numbers::pi / 2))
                     out.push_back("cone half angle outside (0, pi/2)");
                 },
             },
             params);
  return out;
}

TypeMatrix TypeMatrix::from_labels(const std::vector<int>& labels) {
  TypeMatrix t;
  t.onehot = Eigen::MatrixXd::Zero(static_cast<Index>(labels.size()), kNumTypes);
  for (std::size_t i = 0; i < labels.size(); ++i) {
    const int l = labels[i];
    if (l < -1 || l >= kNumTypes) throw std::invalid_argument("type label out of range");
    if (l >= 0) t.onehot(static_cast<Index>(i), l) = 1.0;
  }
  return t;
}

std::vector<int> TypeMatrix::labels() const {
  std::vector<int> out(static_cast<std::size_t>(onehot.rows()), -1);
  for (Index i = 0; i < onehot.rows(); ++i) {
    Index best = 0;
    const double m = onehot.row(i).maxCoeff(&best);
    if (m > 0.0) out[static_cast<std::size_t>(i)] = static_cast<int>(best);
  }
  return out;
}

std::vector<PrimitiveType> GroundTruthScene::primitive_types() const {
  std::vector<PrimitiveType> out;
  out.reserve(surfaces.size());
  for (const auto& s : surfaces) out.push_back(s.type());
  return out;
}

std::vector<PrimitiveParams> GroundTruthScene::primitive_params() const {
  std::vector<PrimitiveParams> out;
  out.reserve(surfaces.size());
  for (const auto& s : surfaces) out.push_back(s.params);
  return out;
}

std::vector<PrimitiveType> FitResult::primitive_types() const {
  std::vector<PrimitiveType> out;
  out.reserve(primitives.size());
  for (const auto& p : primitives) out.push_back(p.type());
  return out;
}

std::vector<PrimitiveParams> FitResult::primitive_params() const {
  std::vector<PrimitiveParams> out;
  out.reserve(primitives.size());
  for (const auto& p : primitives) out.push_back(p.params);
  return out;
}

std::vector<std::string> validate(const GroundTruthScene& scene) {
  std::vector<std::string> out;
  const Index n = scene.cloud.size();
  const Index k = scene.num_primitives();
  if (n < 1) {
    out.push_back("point cloud is empty");
    return out;
  }
  if (!scene.cloud.positions.allFinite()) out.push_back("point positions contain non-finite values");
  if (scene.cloud.normals && scene.cloud.normals->rows() != n)
    out.push_back("normals row count differs from position count");
  if (scene.clean_positions.rows() != n)
    out.push_back("clean_positions row count differs from position count");
  if (scene.membership.weights.rows() != n || scene.membership.weights.cols() != k) {
    out.push_back("membership shape is not N x K");
    return out;
  }
  if (scene.types.onehot.rows() != n || scene.types.onehot.cols() != kNumTypes) {
    out.push_back("type matrix shape is not N x 4");
    return out;
  }

  // Surface checks; on-surface tests only make sense for valid parameters.
  std::vector<bool> params_ok(static_cast<std::size_t>(k), true);
  for (Index j = 0; j < k; ++j) {
    const auto& s = scene.surfaces[static_cast<std::size_t>(j)];
    std::vector<std::string> issues = check_params(s.params);
    if (issues.empty()) {
      if (s.samples.rows() < 1) issues.push_back("no stored samples");
      double worst = 0.0;
      for (Index m = 0; m < s.samples.rows(); ++m)
        worst = std::max(worst, distance(s.samples.row(m).transpose(), s.params));
      if (worst > kOnSurfaceTol) {
        std::ostringstream msg;
        msg << "stored sample off surface by " << worst;
        issues.push_back(msg.str());
      }
    } else {
      params_ok[static_cast<std::size_t>(j)] = false;
    }
    if (!(s.area_fraction > 0.0 && s.area_fraction <= 1.0))
      issues.push_back("area_fraction outside (0, 1]");
    if (!issues.empty()) {
      out.push_back("surface " + std::to_string(j) + " (" + std::string(type_name(s.type())) +
                    "): " + join(issues));
    }
  }

  const auto& w = scene.membership.weights;
  const auto& t = scene.types.onehot;
  for (Index i = 0; i < n; ++i) {
    std::vector<std::string> issues;
    if (scene.cloud.normals && scene.cloud.normals->rows() == n) {
      const double len = scene.cloud.normals->row(i).norm();
      if (!(std::abs(len - 1.0) <= kUnitTol)) issues.push_back("normal is not unit length");
    }
    const double sum = w.row(i).sum();
    if (w.row(i).minCoeff() < 0.0 || w.row(i).maxCoeff() > 1.0)
      issues.push_back("weight outside [0, 1]");
    if (sum > 1.0 + kRowSumTol) {
      std::ostringstream msg;
      msg << "weights sum to " << sum << " > 1";
      issues.push_back(msg.str());
    }
    if (scene.membership.binary) {
      for (Index j = 0; j < k; ++j) {
        if (w(i, j) != 0.0 && w(i, j) != 1.0) {
          issues.push_back("non-binary weight in binary membership");
          break;
        }
      }
    }
    const double tsum = t.row(i).sum();
    if (tsum != 0.0 && tsum != 1.0) issues.push_back("type row sum not in {0, 1}");
    Eigen::Vector4d expected = Eigen::Vector4d::Zero();
    for (Index j = 0; j < k; ++j) {
      if (w(i, j) == 1.0) {
        const auto& s = scene.surfaces[static_cast<std::size_t>(j)];
        expected[type_index(s.type())] += 1.0;
        if (params_ok[static_cast<std::size_t>(j)] && scene.clean_positions.rows() == n) {
          const double dist = distance(scene.clean_positions.row(i).transpose(), s.params);
          if (dist > kOnSurfaceTol) {
            std::ostringstream msg;
            msg << "clean point off surface " << j << " by " << dist;
            issues.push_back(msg.str());
          }
        }
      }
    }
    if ((t.row(i).transpose() - expected).cwiseAbs().maxCoeff() != 0.0)
      issues.push_back("type row inconsistent with membership");
    if (!issues.empty()) out.push_back("row " + std::to_string(i) + ": " + join(issues));
  }
  return out;
}

std::vector<std::string> validate(const FitResult& fit) {
  std::vector<std::string> out;
  const auto& w = fit.membership.weights;
  if (w.cols() != static_cast<Index>(fit.primitives.size()))
    out.push_back("membership column count differs from primitive count");
  if (!w.allFinite()) out.push_back("membership contains non-finite values");
  if (w.size() > 0 && (w.minCoeff() < 0.0 || w.maxCoeff() > 1.0))
    out.push_back("membership weight outside [0, 1]");
  for (std::size_t j = 0; j < fit.primitives.size(); ++j) {
    for (const auto& issue : check_params(fit.primitives[j].params))
      out.push_back("primitive " + std::to_string(j) + ": " + issue);
  }
  if (fit.normals && (fit.normals->rows() != w.rows() || !fit.normals->allFinite()))
    out.push_back("normals malformed");
  if (fit.point_types &&
      (fit.point_types->rows() != w.rows() || fit.point_types->cols() != kNumTypes ||
       !fit.point_types->allFinite()))
    out.push_back("point_types malformed");
  return out;
}

}  // namespace primfit
