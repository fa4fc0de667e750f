#include "primfit/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <stdexcept>

#include "primfit/distance.hpp"

namespace primfit {

namespace {

constexpr double kRadToDeg = 180.0 / std::numbers::pi;

double acos_deg(double c) { return std::acos(std::clamp(c, -1.0, 1.0)) * kRadToDeg; }

double theta(const PrimitiveParams& gt, const PrimitiveParams& pred) {
  if (type_of(gt) == PrimitiveType::kSphere) return 1.0;
  const auto a = axis_of(gt);
  const auto b = axis_of(pred);
  if (!a || !b) return 0.0;
  return std::abs(a->dot(*b));
}

nlohmann::ordered_json opt(const std::optional<double>& v) {
  return v ? nlohmann::ordered_json(*v) : nlohmann::ordered_json(nullptr);
}

std::string eps_key(double eps) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%g", eps);
  return buf;
}

}  // namespace

Eigen::MatrixXd one_hot_rows(const Eigen::MatrixXd& w) {
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(w.rows(), w.cols());
  for (Index i = 0; i < w.rows(); ++i) {
    if (w.cols() == 0) break;
    Index best = 0;
    if (w.row(i).maxCoeff(&best) > 0.0) out(i, best) = 1.0;
  }
  return out;
}

double seg_mean_iou(const MembershipMatrix& w, const MembershipMatrix& w_hat, const Assignment& match) {
  const Index k = w.num_primitives();
  if (k == 0) return 0.0;
  const Eigen::MatrixXd hard = one_hot_rows(w_hat.weights);
  double sum = 0.0;
  for (const auto& [g, p] : match.pairs) {
    const Eigen::ArrayXd a = (w.weights.col(g).array() > 0.5).cast<double>();
    const Eigen::ArrayXd b = hard.col(p).array();
    const double inter = (a * b).sum();
    const double uni = (a + b - a * b).sum();
    sum += uni > 0.0 ? inter / uni : 0.0;
  }
  return sum / static_cast<double>(k);
}

std::optional<double> type_accuracy(const Assignment& match, const std::vector<PrimitiveType>& t,
                                    const std::vector<PrimitiveType>& t_hat) {
  if (match.pairs.empty()) return std::nullopt;
  int correct = 0;
  for (const auto& [g, p] : match.pairs)
    correct += t[static_cast<std::size_t>(g)] == t_hat[static_cast<std::size_t>(p)];
  return 100.0 * correct / static_cast<double>(match.pairs.size());
}

double point_normal_diff_deg(const Eigen::MatrixX3d& n, const Eigen::MatrixX3d& n_hat) {
  if (n.rows() != n_hat.rows()) throw std::invalid_argument("point_normal_diff_deg: row counts differ");
  if (n.rows() == 0) return 0.0;
  double sum = 0.0;
  for (Index i = 0; i < n.rows(); ++i) sum += acos_deg(std::abs(n.row(i).dot(n_hat.row(i))));
  return sum / static_cast<double>(n.rows());
}

std::optional<double> axis_diff_deg(const Assignment& match, const std::vector<PrimitiveParams>& gt,
                                    const std::vector<PrimitiveParams>& pred) {
  double sum = 0.0;
  int count = 0;
  for (const auto& [g, p] : match.pairs) {
    const auto& a = gt[static_cast<std::size_t>(g)];
    const auto& b = pred[static_cast<std::size_t>(p)];
    if (type_of(a) != type_of(b)) continue;
    sum += acos_deg(theta(a, b));
    ++count;
  }
  if (count == 0) return std::nullopt;
  return sum / count;
}

std::optional<ResidualStats> sk_residual(const Assignment& match,
                                         const std::vector<BoundedSurface>& surfaces,
                                         const std::vector<PrimitiveParams>& pred) {
  if (match.pairs.empty()) return std::nullopt;
  std::vector<double> per;
  for (const auto& [g, p] : match.pairs) {
    const auto& s = surfaces[static_cast<std::size_t>(g)].samples;
    per.push_back(distances(s, pred[static_cast<std::size_t>(p)]).mean());
  }
  ResidualStats r;
  for (double v : per) r.mean += v;
  r.mean /= static_cast<double>(per.size());
  double var = 0.0;
  for (double v : per) var += (v - r.mean) * (v - r.mean);
  r.stddev = std::sqrt(var / static_cast<double>(per.size()));
  return r;
}

double surface_coverage(const BoundedSurface& surface, const PrimitiveParams& pred, double eps) {
  if (surface.samples.rows() == 0) return 0.0;
  const Eigen::VectorXd d = distances(surface.samples, pred);
  return static_cast<double>((d.array() < eps).count()) / static_cast<double>(d.size());
}

double sk_coverage(const Assignment& match, const std::vector<BoundedSurface>& surfaces,
                   const std::vector<PrimitiveParams>& pred, double eps) {
  if (surfaces.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& [g, p] : match.pairs)
    sum += surface_coverage(surfaces[static_cast<std::size_t>(g)], pred[static_cast<std::size_t>(p)], eps);
  return 100.0 * sum / static_cast<double>(surfaces.size());
}

double p_coverage(const Eigen::MatrixX3d& points, const std::vector<PrimitiveParams>& pred, double eps,
                  const std::vector<bool>* mask) {
  Index total = 0;
  Index covered = 0;
  for (Index i = 0; i < points.rows(); ++i) {
    if (mask && !(*mask)[static_cast<std::size_t>(i)]) continue;
    ++total;
    const Eigen::Vector3d p = points.row(i).transpose();
    for (const auto& prim : pred) {
      if (distance(p, prim) < eps) {
        ++covered;
        break;
      }
    }
  }
  if (total == 0) return 0.0;
  return 100.0 * static_cast<double>(covered) / static_cast<double>(total);
}

std::vector<ScaleBin> scale_binned_sk_coverage(const Assignment& match,
                                               const std::vector<BoundedSurface>& surfaces,
                                               const std::vector<PrimitiveParams>& pred, double eps,
                                               const std::vector<double>& edges) {
  if (edges.size() < 2) throw std::invalid_argument("scale bins need at least two edges");
  std::vector<ScaleBin> bins(edges.size() - 1);
  std::vector<double> sums(bins.size(), 0.0);
  for (std::size_t b = 0; b < bins.size(); ++b) {
    bins[b].lo = edges[b];
    bins[b].hi = edges[b + 1];
  }
  for (std::size_t k = 0; k < surfaces.size(); ++k) {
    const double f = surfaces[k].area_fraction;
    for (std::size_t b = 0; b < bins.size(); ++b) {
      const bool last = b + 1 == bins.size();
      if (f >= bins[b].lo && (f < bins[b].hi || (last && f <= bins[b].hi))) {
        const Index p = match.pred_for(static_cast<Index>(k));
        if (p >= 0) sums[b] += surface_coverage(surfaces[k], pred[static_cast<std::size_t>(p)], eps);
        ++bins[b].count;
        break;
      }
    }
  }
  for (std::size_t b = 0; b < bins.size(); ++b) {
    if (bins[b].count > 0) bins[b].coverage = 100.0 * sums[b] / bins[b].count;
  }
  return bins;
}

nlohmann::ordered_json MetricsBundle::to_json() const {
  nlohmann::ordered_json j;
  j["shape"] = shape_id;
  j["num_gt"] = num_gt;
  j["num_pred"] = num_pred;
  j["num_matched"] = num_matched;
  j["seg_mean_iou"] = seg_mean_iou;
  j["type_accuracy_pct"] = opt(type_accuracy_pct);
  j["point_normal_deg"] = opt(point_normal_deg);
  j["primitive_axis_deg"] = opt(primitive_axis_deg);
  j["sk_residual_mean"] = opt(sk_residual_mean);
  j["sk_residual_std"] = opt(sk_residual_std);
  auto eps_map = [](const std::map<double, double>& m) {
    nlohmann::ordered_json o = nlohmann::ordered_json::object();
    for (const auto& [e, v] : m) o[eps_key(e)] = v;
    return o;
  };
  j["sk_coverage"] = eps_map(sk_coverage);
  j["p_coverage"] = eps_map(p_coverage);
  j["p_coverage_assigned"] = eps_map(p_coverage_assigned);
  nlohmann::ordered_json bins = nlohmann::ordered_json::object();
  for (const auto& [e, list] : scale_bins) {
    nlohmann::ordered_json arr = nlohmann::ordered_json::array();
    for (const auto& b : list)
      arr.push_back({{"lo", b.lo}, {"hi", b.hi}, {"count", b.count}, {"coverage", opt(b.coverage)}});
    bins[eps_key(e)] = arr;
  }
  j["scale_binned_sk_coverage"] = bins;
  j["surface_area_fractions"] = surface_area_fractions;
  nlohmann::ordered_json per = nlohmann::ordered_json::object();
  for (const auto& [e, v] : surface_coverage) per[eps_key(e)] = v;
  j["surface_coverage"] = per;
  return j;
}

MetricsBundle evaluate_shape(const GroundTruthScene& scene, const FitResult& fit, const EvalOptions& opts) {
  if (fit.membership.num_points() != scene.num_points())
    throw std::invalid_argument("evaluate_shape: prediction has " +
                                std::to_string(fit.membership.num_points()) + " rows, scene has " +
                                std::to_string(scene.num_points()));
  const auto gt = scene.primitive_params();
  const auto pred = fit.primitive_params();
  const Assignment match = opts.match == MatchMode::kRiou
                               ? match_primitives(scene.membership, fit.membership).assignment
                               : match_by_residual(scene.surfaces, pred);

  MetricsBundle m;
  m.num_gt = static_cast<int>(gt.size());
  m.num_pred = static_cast<int>(pred.size());
  m.num_matched = static_cast<int>(match.pairs.size());
  m.seg_mean_iou = seg_mean_iou(scene.membership, fit.membership, match);
  m.type_accuracy_pct = type_accuracy(match, scene.primitive_types(), fit.primitive_types());
  if (fit.normals && scene.cloud.normals)
    m.point_normal_deg = point_normal_diff_deg(*scene.cloud.normals, *fit.normals);
  m.primitive_axis_deg = axis_diff_deg(match, gt, pred);
  if (const auto r = sk_residual(match, scene.surfaces, pred)) {
    m.sk_residual_mean = r->mean;
    m.sk_residual_std = r->stddev;
  }
  std::vector<bool> assigned(static_cast<std::size_t>(scene.num_points()));
  for (Index i = 0; i < scene.num_points(); ++i)
    assigned[static_cast<std::size_t>(i)] = (scene.membership.weights.row(i).array() != 0.0).any();
  for (const auto& s : scene.surfaces) m.surface_area_fractions.push_back(s.area_fraction);
  for (double eps : opts.epsilons) {
    m.sk_coverage[eps] = sk_coverage(match, scene.surfaces, pred, eps);
    m.p_coverage[eps] = p_coverage(scene.cloud.positions, pred, eps);
    m.p_coverage_assigned[eps] = p_coverage(scene.cloud.positions, pred, eps, &assigned);
    m.scale_bins[eps] = scale_binned_sk_coverage(match, scene.surfaces, pred, eps, opts.scale_edges);
    std::vector<double> per(scene.surfaces.size(), 0.0);
    for (const auto& [g, p] : match.pairs)
      per[static_cast<std::size_t>(g)] =
          100.0 * surface_coverage(scene.surfaces[static_cast<std::size_t>(g)], pred[static_cast<std::size_t>(p)], eps);
    m.surface_coverage[eps] = per;
  }
  return m;
}

}  // namespace primfit
