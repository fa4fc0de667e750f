#include <Eigen/Dense>
#include <Eigen/Geometry>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <unordered_map>

#include "primfit/distance.hpp"
#include "primfit/estimators.hpp"
#include "primfit/fitters.hpp"
#include "primfit/metrics.hpp"
#include "primfit/rng.hpp"

namespace primfit {

namespace {

using Eigen::Matrix3d;
using Eigen::MatrixX3d;
using Eigen::Vector3d;

// Uniform voxel grid for exact k-nearest-neighbour queries.
class Grid {
 public:
  Grid(const MatrixX3d& pts, double cell) : pts_(pts), cell_(cell) {
    for (Index i = 0; i < pts.rows(); ++i) cells_[key(coord(pts.row(i).transpose()))].push_back(i);
  }

  std::vector<Index> knn(const Vector3d& q, int k) const {
    const Eigen::Vector3i c = coord(q);
    std::vector<std::pair<double, Index>> found;
    const Index n = pts_.rows();
    for (int r = 0;; ++r) {
      for (int dx = -r; dx <= r; ++dx)
        for (int dy = -r; dy <= r; ++dy)
          for (int dz = -r; dz <= r; ++dz) {
            if (std::max({std::abs(dx), std::abs(dy), std::abs(dz)}) != r) continue;
            const auto it = cells_.find(key(c + Eigen::Vector3i(dx, dy, dz)));
            if (it == cells_.end()) continue;
            for (Index j : it->second) found.emplace_back((pts_.row(j).transpose() - q).squaredNorm(), j);
          }
      const Index want = std::min<Index>(k, n);
      if (static_cast<Index>(found.size()) >= want) {
        std::nth_element(found.begin(), found.begin() + (want - 1), found.end());
        const double kth = found[static_cast<std::size_t>(want - 1)].first;
        if (static_cast<Index>(found.size()) == n || std::sqrt(kth) <= r * cell_) {
          std::sort(found.begin(), found.end());
          std::vector<Index> out;
          for (Index j = 0; j < want; ++j) out.push_back(found[static_cast<std::size_t>(j)].second);
          return out;
        }
      }
    }
  }

 private:
  Eigen::Vector3i coord(const Vector3d& p) const {
    return (p / cell_).array().floor().cast<int>();
  }
  static std::int64_t key(const Eigen::Vector3i& c) {
    return (static_cast<std::int64_t>(c.x() + (1 << 20)) << 42) |
           (static_cast<std::int64_t>(c.y() + (1 << 20)) << 21) | static_cast<std::int64_t>(c.z() + (1 << 20));
  }

  const MatrixX3d& pts_;
  double cell_;
  std::unordered_map<std::int64_t, std::vector<Index>> cells_;
};

constexpr double kMaxCandidateRadius = 5.0;

bool inlier(const Vector3d& p, const Vector3d& n, const PrimitiveParams& prim, double eps, double cos_eps) {
  if (distance(p, prim) >= eps) return false;
  return std::abs(n.dot(surface_normal(p, prim))) >= cos_eps;
}

std::optional<Vector3d> closest_point_of_lines(const Vector3d& p0, const Vector3d& d0, const Vector3d& p1,
                                               const Vector3d& d1) {
  const double b = d0.dot(d1);
  const double denom = 1.0 - b * b;
  if (denom < 1e-6) return std::nullopt;
  const Vector3d w = p0 - p1;
  const double dd = d0.dot(w);
  const double e = d1.dot(w);
  const double t = (b * e - dd) / denom;
  const double s = (e - b * dd) / denom;
  return 0.5 * ((p0 + t * d0) + (p1 + s * d1));
}

struct Candidate {
  PrimitiveParams params;
  Index score = 0;
};

}  // namespace

Eigen::MatrixX3d estimate_normals(const MatrixX3d& points, int k) {
  const Index n = points.rows();
  MatrixX3d out(n, 3);
  if (n == 0) return out;
  const Grid grid(points, 0.05);
  for (Index i = 0; i < n; ++i) {
    const auto nb = grid.knn(points.row(i).transpose(), k);
    Vector3d mean = Vector3d::Zero();
    for (Index j : nb) mean += points.row(j).transpose();
    mean /= static_cast<double>(nb.size());
    Matrix3d cov = Matrix3d::Zero();
    for (Index j : nb) {
      const Vector3d d = points.row(j).transpose() - mean;
      cov += d * d.transpose();
    }
    const Eigen::SelfAdjointEigenSolver<Matrix3d> es(cov);
    out.row(i) = canonical_sign(es.eigenvectors().col(0).normalized()).transpose();
  }
  return out;
}

std::optional<PrimitiveParams> minimal_candidate(PrimitiveType type, const MatrixX3d& p, const MatrixX3d& n) {
  switch (type) {
    case PrimitiveType::kPlane: {
      const Vector3d a = canonical_sign(n.row(0).transpose().normalized());
      return Plane{a, a.dot(p.row(0).transpose())};
    }
    case PrimitiveType::kSphere: {
      const auto c = closest_point_of_lines(p.row(0).transpose(), n.row(0).transpose(), p.row(1).transpose(),
                                            n.row(1).transpose());
      if (!c) return std::nullopt;
      const double r = 0.5 * ((p.row(0).transpose() - *c).norm() + (p.row(1).transpose() - *c).norm());
      if (!(r > 1e-3 && r < kMaxCandidateRadius)) return std::nullopt;
      return Sphere{*c, r};
    }
    case PrimitiveType::kCylinder: {
      const Vector3d n0 = n.row(0).transpose();
      const Vector3d n1 = n.row(1).transpose();
      const Vector3d axis = n0.cross(n1);
      if (axis.norm() < 0.05) return std::nullopt;
      const Vector3d a = canonical_sign(axis.normalized());
      auto flat = [&](const Vector3d& v) -> Vector3d { return v - a.dot(v) * a; };
      const Vector3d q0 = flat(p.row(0).transpose());
      const Vector3d q1 = flat(p.row(1).transpose());
      const auto c = closest_point_of_lines(q0, flat(n0).normalized(), q1, flat(n1).normalized());
      if (!c) return std::nullopt;
      const Vector3d center = flat(*c);
      const double r = 0.5 * ((q0 - center).norm() + (q1 - center).norm());
      if (!(r > 1e-3 && r < kMaxCandidateRadius)) return std::nullopt;
      return Cylinder{a, center, r};
    }
    case PrimitiveType::kCone: {
      Matrix3d nm = n.topRows<3>();
      Vector3d rhs;
      for (int i = 0; i < 3; ++i) rhs[i] = n.row(i).dot(p.row(i));
      const Eigen::FullPivLU<Matrix3d> lu(nm);
      if (!lu.isInvertible() || std::abs(lu.determinant()) < 1e-6) return std::nullopt;
      const Vector3d c = lu.solve(rhs);
      if (!(c.norm() < kMaxCandidateRadius)) return std::nullopt;
      Vector3d q[3];
      for (int i = 0; i < 3; ++i) {
        const Vector3d v = p.row(i).transpose() - c;
        if (v.norm() < 1e-6) return std::nullopt;
        q[i] = c + v.normalized();
      }
      Vector3d a = (q[1] - q[0]).cross(q[2] - q[0]);
      if (a.norm() < 1e-9) return std::nullopt;
      a.normalize();
      if (a.dot(p.row(0).transpose() - c) < 0.0) a = -a;
      double theta = 0.0;
      for (int i = 0; i < 3; ++i) {
        const Vector3d v = (p.row(i).transpose() - c).normalized();
        theta += std::acos(std::clamp(a.dot(v), -1.0, 1.0));
      }
      theta /= 3.0;
      if (!(theta > 0.02 && theta < std::numbers::pi / 2 - 0.02)) return std::nullopt;
      return Cone{c, a, theta};
    }
  }
  return std::nullopt;
}

nlohmann::ordered_json RansacConfig::to_json() const {
  nlohmann::ordered_json types = nlohmann::ordered_json::array();
  for (PrimitiveType t : kAllTypes) {
    if (allowed_types[static_cast<std::size_t>(type_index(t))]) types.push_back(std::string(type_name(t)));
  }
  return {{"distance_epsilon", distance_epsilon},
          {"normal_epsilon_deg", normal_epsilon_deg},
          {"min_inliers", min_inliers},
          {"max_candidates_per_round", max_candidates_per_round},
          {"rounds", rounds},
          {"seed", seed},
          {"max_primitives", max_primitives},
          {"sample_radius", sample_radius},
          {"score_subsample", score_subsample},
          {"types", types}};
}

namespace {

struct Extraction {
  std::vector<PrimitiveParams> prims;
  std::vector<std::vector<Index>> inliers;
};

Extraction ransac_once(const MatrixX3d& points, const MatrixX3d& normals, const RansacConfig& cfg,
                       const std::vector<Index>& rows, const Eigen::MatrixXd* point_types, Rng rng) {
  const double cos_eps = std::cos(cfg.normal_epsilon_deg * std::numbers::pi / 180.0);
  std::vector<PrimitiveType> allowed;
  for (PrimitiveType t : kAllTypes) {
    if (cfg.allowed_types[static_cast<std::size_t>(type_index(t))]) allowed.push_back(t);
  }
  Extraction out;
  if (allowed.empty()) return out;
  std::vector<Index> remaining = rows;
  const double r2 = cfg.sample_radius * cfg.sample_radius;

  auto count_inliers = [&](const PrimitiveParams& prim, const std::vector<Index>& idx) {
    std::vector<Index> in;
    for (Index i : idx) {
      if (inlier(points.row(i).transpose(), normals.row(i).transpose(), prim, cfg.distance_epsilon, cos_eps))
        in.push_back(i);
    }
    return in;
  };

  while (static_cast<int>(out.prims.size()) < cfg.max_primitives &&
         static_cast<Index>(remaining.size()) >= cfg.min_inliers) {
    // Subsample for ranking candidates.
    std::vector<Index> sub = remaining;
    if (static_cast<int>(sub.size()) > cfg.score_subsample) {
      for (int s = 0; s < cfg.score_subsample; ++s) {
        const auto j = static_cast<std::size_t>(s) + rng.index(sub.size() - static_cast<std::size_t>(s));
        std::swap(sub[static_cast<std::size_t>(s)], sub[j]);
      }
      sub.resize(static_cast<std::size_t>(cfg.score_subsample));
      std::sort(sub.begin(), sub.end());
    }
    const double scale = static_cast<double>(remaining.size()) / static_cast<double>(sub.size());

    std::optional<Candidate> best;
    for (int c = 0; c < cfg.max_candidates_per_round; ++c) {
      const Index seed = remaining[rng.index(remaining.size())];
      PrimitiveType type = allowed[static_cast<std::size_t>(c) % allowed.size()];
      if (point_types) {
        Index l = 0;
        if (point_types->row(seed).maxCoeff(&l) > 0.0 &&
            cfg.allowed_types[static_cast<std::size_t>(l)])
          type = static_cast<PrimitiveType>(l);
      }
      const int need = type == PrimitiveType::kPlane ? 1 : (type == PrimitiveType::kCone ? 3 : 2);
      std::vector<Index> local;
      for (Index i : remaining) {
        if (i != seed && (points.row(i) - points.row(seed)).squaredNorm() < r2) local.push_back(i);
      }
      if (static_cast<int>(local.size()) < need - 1) continue;
      MatrixX3d mp(need, 3), mn(need, 3);
      mp.row(0) = points.row(seed);
      mn.row(0) = normals.row(seed);
      for (int s = 1; s < need; ++s) {
        const auto j = static_cast<std::size_t>(s - 1) + rng.index(local.size() - static_cast<std::size_t>(s - 1));
        std::swap(local[static_cast<std::size_t>(s - 1)], local[j]);
        mp.row(s) = points.row(local[static_cast<std::size_t>(s - 1)]);
        mn.row(s) = normals.row(local[static_cast<std::size_t>(s - 1)]);
      }
      const auto prim = minimal_candidate(type, mp, mn);
      if (!prim || !check_params(*prim).empty()) continue;
      Index score = 0;
      for (Index i : sub) {
        score += inlier(points.row(i).transpose(), normals.row(i).transpose(), *prim, cfg.distance_epsilon,
                        cos_eps);
      }
      if (!best || score > best->score) best = Candidate{*prim, score};
    }
    if (!best || best->score * scale < cfg.min_inliers) break;

    std::vector<Index> in = count_inliers(best->params, remaining);
    PrimitiveParams prim = best->params;
    // Least-squares refit on the inliers; kept when it explains at least as
    // many points.
    if (static_cast<int>(in.size()) >= cfg.min_inliers) {
      MatrixX3d ip(static_cast<Index>(in.size()), 3), in_n(static_cast<Index>(in.size()), 3);
      for (std::size_t s = 0; s < in.size(); ++s) {
        ip.row(static_cast<Index>(s)) = points.row(in[s]);
        in_n.row(static_cast<Index>(s)) = normals.row(in[s]);
      }
      const Eigen::VectorXd w = Eigen::VectorXd::Ones(ip.rows());
      try {
        const Estimate e = fit_primitive(type_of(prim), EstimatorInput{ip, in_n, w});
        if (!e.trivialized && check_params(e.params).empty()) {
          std::vector<Index> refit_in = count_inliers(e.params, remaining);
          if (refit_in.size() >= in.size()) {
            prim = e.params;
            in = std::move(refit_in);
          }
        }
      } catch (const DegenerateInput&) {
      }
    }
    if (static_cast<int>(in.size()) < cfg.min_inliers) break;
    out.prims.push_back(prim);
    std::vector<Index> rest;
    std::set_difference(remaining.begin(), remaining.end(), in.begin(), in.end(), std::back_inserter(rest));
    remaining = std::move(rest);
    out.inliers.push_back(std::move(in));
  }
  return out;
}

}  // namespace

FitResult ransac_fit(const MatrixX3d& points, const MatrixX3d& normals, const RansacConfig& cfg,
                     const RansacInputs& extra) {
  if (normals.rows() != points.rows()) throw std::invalid_argument("ransac_fit: normals are required");
  std::vector<Index> rows;
  if (extra.subset) {
    rows = *extra.subset;
    std::sort(rows.begin(), rows.end());
  } else {
    for (Index i = 0; i < points.rows(); ++i) rows.push_back(i);
  }
  const Rng root(cfg.seed);
  std::optional<Extraction> best;
  double best_cov = -1.0;
  for (int r = 0; r < std::max(1, cfg.rounds); ++r) {
    Extraction e = ransac_once(points, normals, cfg, rows, extra.point_types, root.split(static_cast<std::uint64_t>(r)));
    std::size_t covered = 0;
    for (const auto& in : e.inliers) covered += in.size();
    // Coverage of the considered rows by the extracted primitives.
    Index within = 0;
    for (Index i : rows) {
      for (const auto& prim : e.prims) {
        if (distance(points.row(i).transpose(), prim) < cfg.distance_epsilon) {
          ++within;
          break;
        }
      }
    }
    const double cov = rows.empty() ? 0.0 : static_cast<double>(within) / static_cast<double>(rows.size());
    if (cov > best_cov) {
      best_cov = cov;
      best = std::move(e);
    }
  }

  FitResult fit;
  fit.meta.method = "ransac";
  fit.meta.config = cfg.to_json();
  fit.meta.seed = cfg.seed;
  const Index k = static_cast<Index>(best->prims.size());
  fit.membership.weights = Eigen::MatrixXd::Zero(points.rows(), k);
  fit.membership.binary = true;
  for (Index j = 0; j < k; ++j) {
    const auto& in = best->inliers[static_cast<std::size_t>(j)];
    for (Index i : in) fit.membership.weights(i, j) = 1.0;
    FittedPrimitive fp;
    fp.params = best->prims[static_cast<std::size_t>(j)];
    fp.confidence = rows.empty() ? 0.0 : static_cast<double>(in.size()) / static_cast<double>(rows.size());
    fit.primitives.push_back(fp);
  }
  fit.normals = normals;
  return fit;
}

FitResult ransac_fit_segments(const MatrixX3d& points, const MatrixX3d& normals, const MembershipMatrix& segments,
                              const RansacConfig& cfg, const Eigen::MatrixXd* point_types) {
  FitResult fit;
  fit.meta.method = "ransac";
  fit.meta.config = cfg.to_json();
  fit.meta.seed = cfg.seed;
  fit.normals = normals;
  std::vector<Eigen::VectorXd> cols;
  RansacConfig one = cfg;
  one.max_primitives = 1;
  for (Index k = 0; k < segments.num_primitives(); ++k) {
    std::vector<Index> subset;
    for (Index i = 0; i < points.rows(); ++i) {
      if (segments.weights(i, k) > 0.0) subset.push_back(i);
    }
    one.seed = derive_seed(cfg.seed, static_cast<std::uint64_t>(k));
    const FitResult part = ransac_fit(points, normals, one, RansacInputs{&subset, point_types});
    if (part.primitives.empty()) {
      fit.meta.diagnostics.push_back("segment " + std::to_string(k) + ": no primitive found");
      continue;
    }
    fit.primitives.push_back(part.primitives.front());
    cols.push_back(part.membership.weights.col(0));
  }
  fit.membership.binary = true;
  fit.membership.weights.resize(points.rows(), static_cast<Index>(cols.size()));
  for (std::size_t j = 0; j < cols.size(); ++j) fit.membership.weights.col(static_cast<Index>(j)) = cols[j];
  return fit;
}

}  // namespace primfit
