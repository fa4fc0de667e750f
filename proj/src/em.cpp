#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "overloaded.hpp"
#include "primfit/distance.hpp"
#include "primfit/estimators.hpp"
#include "primfit/fitters.hpp"
#include "primfit/losses.hpp"

namespace primfit {

namespace {

using Eigen::MatrixXd;

// Column of the largest weight, or -1 for an all-zero row.
Index owner(const MatrixXd& w, Index i) {
  if (w.cols() == 0) return -1;
  Index best = 0;
  return w.row(i).maxCoeff(&best) > 0.0 ? best : -1;
}

// Weighted energy of one column under `prim`. Against a candidate of a
// different type the squared distance is used so the two are comparable.
double column_energy(const Eigen::MatrixX3d& points, const Eigen::VectorXd& w, const PrimitiveParams& prim,
                     const PrimitiveParams& other) {
  const bool same = type_of(prim) == type_of(other);
  double e = 0.0;
  for (Index i = 0; i < points.rows(); ++i) {
    if (w[i] <= 0.0) continue;
    const Eigen::Vector3d p = points.row(i).transpose();
    if (same) {
      e += w[i] * algebraic_energy(p, prim);
    } else {
      const double d = distance(p, prim);
      e += w[i] * d * d;
    }
  }
  return e;
}

}  // namespace

nlohmann::ordered_json EmConfig::to_json() const {
  return {{"iterations", iterations},
          {"temperature", temperature},
          {"hard_assign", hard_assign},
          {"k_max", k_max},
          {"cap", cap},
          {"assign_by", assign_by == AssignBy::kDistance ? "distance" : "algebraic_energy"},
          {"min_change_fraction", min_change_fraction}};
}

double algebraic_energy(const Eigen::Vector3d& p, const PrimitiveParams& prim) {
  return std::visit(Overloaded{
                        [&](const Plane& s) {
                          const double r = s.normal.dot(p) - s.d;
                          return r * r;
                        },
                        [&](const Sphere& s) {
                          const double r = (p - s.center).squaredNorm() - s.radius * s.radius;
                          return r * r;
                        },
                        [&](const auto&) {
                          const double d = distance(p, prim);
                          return d * d;
                        },
                    },
                    prim);
}

double total_energy(const Eigen::MatrixX3d& points, const MembershipMatrix& w,
                    const std::vector<PrimitiveParams>& prims) {
  double e = 0.0;
  for (Index i = 0; i < points.rows(); ++i) {
    const Index k = owner(w.weights, i);
    if (k >= 0) e += algebraic_energy(points.row(i).transpose(), prims[static_cast<std::size_t>(k)]);
  }
  return e;
}

FitResult em_fit(const Eigen::MatrixX3d& points, const Eigen::MatrixX3d& normals, const FitResult& init,
                 const EmConfig& cfg, EmTrace* trace) {
  if (init.primitives.empty()) throw std::invalid_argument("em_fit: the initial fit has no primitives");
  if (cfg.iterations < 1 || !(cfg.temperature > 0.0)) throw std::invalid_argument("em_fit: invalid config");
  const Index n = points.rows();

  // Keep at most k_max columns, the heaviest first-come.
  std::vector<Index> keep(init.primitives.size());
  std::iota(keep.begin(), keep.end(), 0);
  if (static_cast<int>(keep.size()) > cfg.k_max) {
    std::stable_sort(keep.begin(), keep.end(), [&](Index a, Index b) {
      return init.membership.weights.col(a).sum() > init.membership.weights.col(b).sum();
    });
    keep.resize(static_cast<std::size_t>(cfg.k_max));
    std::sort(keep.begin(), keep.end());
  }
  std::vector<PrimitiveParams> prims;
  std::vector<PrimitiveType> types;
  for (Index k : keep) {
    prims.push_back(init.primitives[static_cast<std::size_t>(k)].params);
    types.push_back(init.primitives[static_cast<std::size_t>(k)].type());
  }
  MembershipMatrix w;
  w.weights = MatrixXd::Zero(n, static_cast<Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) w.weights.col(static_cast<Index>(j)) = init.membership.weights.col(keep[j]);
  w.binary = cfg.hard_assign;

  EmTrace local;
  EmTrace& tr = trace ? *trace : local;
  tr = EmTrace{};
  std::vector<std::string> diagnostics;

  for (int it = 0; it < cfg.iterations; ++it) {
    const Index k = static_cast<Index>(prims.size());
    if (k == 0) break;
    // (a) membership update
    MatrixXd next = MatrixXd::Zero(n, k);
    Index changes = 0;
    for (Index i = 0; i < n; ++i) {
      const Eigen::Vector3d p = points.row(i).transpose();
      Eigen::VectorXd dist(k), score(k);
      for (Index j = 0; j < k; ++j) {
        dist[j] = distance(p, prims[static_cast<std::size_t>(j)]);
        score[j] = cfg.assign_by == AssignBy::kDistance ? dist[j]
                                                        : algebraic_energy(p, prims[static_cast<std::size_t>(j)]);
      }
      const bool capped = cfg.cap > 0.0 && dist.minCoeff() > cfg.cap;
      if (!capped) {
        if (cfg.hard_assign) {
          Index best = 0;
          score.minCoeff(&best);
          next(i, best) = 1.0;
        } else {
          const Eigen::ArrayXd logits = -(dist.array().square()) / cfg.temperature;
          const Eigen::ArrayXd e = (logits - logits.maxCoeff()).exp();
          next.row(i) = (e / e.sum()).matrix().transpose();
        }
      }
      changes += owner(next, i) != owner(w.weights, i);
    }
    w.weights = std::move(next);
    tr.energy_assign.push_back(total_energy(points, w, prims));
    tr.changes.push_back(changes);

    // (b) parameter update with the voted column types
    FitResult view;
    for (std::size_t j = 0; j < prims.size(); ++j) view.primitives.push_back({prims[j], 1.0});
    view.membership = w;
    view.point_types = init.point_types;
    types = vote_types(point_type_probabilities(view), w.weights);
    const auto est = estimate_all(points, normals, w, types);
    std::vector<Index> alive;
    for (Index j = 0; j < k; ++j) {
      const auto& col = est[static_cast<std::size_t>(j)];
      if (!((w.weights.col(j).array() > kEffectiveWeight).any())) {
        tr.collapsed.push_back("iteration " + std::to_string(it) + ": column " + std::to_string(j) + " emptied");
        continue;
      }
      alive.push_back(j);
      // A failed or trivialized re-estimate keeps the previous parameters, and
      // so does one that raises the column energy (a generalized EM step).
      if (!col.params || col.trivialized) continue;
      auto& cur = prims[static_cast<std::size_t>(j)];
      if (column_energy(points, w.weights.col(j), *col.params, cur) <=
          column_energy(points, w.weights.col(j), cur, *col.params))
        cur = *col.params;
    }
    if (static_cast<Index>(alive.size()) < k) {
      std::vector<PrimitiveParams> kept;
      MatrixXd kw(n, static_cast<Index>(alive.size()));
      for (std::size_t a = 0; a < alive.size(); ++a) {
        kept.push_back(prims[static_cast<std::size_t>(alive[a])]);
        kw.col(static_cast<Index>(a)) = w.weights.col(alive[a]);
      }
      prims = std::move(kept);
      w.weights = std::move(kw);
    }
    tr.energy.push_back(total_energy(points, w, prims));
    tr.iterations = it + 1;
    if (static_cast<double>(changes) < cfg.min_change_fraction * static_cast<double>(n)) break;
  }

  FitResult out;
  out.meta.method = "em";
  out.meta.config = cfg.to_json();
  out.meta.seed = init.meta.seed;
  out.meta.diagnostics = tr.collapsed;
  for (const auto& p : prims) out.primitives.push_back({p, 1.0});
  for (std::size_t j = 0; j < prims.size(); ++j) {
    out.primitives[j].confidence =
        n > 0 ? w.weights.col(static_cast<Index>(j)).sum() / static_cast<double>(n) : 0.0;
  }
  out.membership = w;
  out.normals = normals;
  out.point_types = init.point_types;
  return out;
}

}  // namespace primfit
