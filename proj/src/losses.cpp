#include "primfit/losses.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "primfit/distance.hpp"
#include "primfit/estimators.hpp"

namespace primfit {

namespace {

constexpr double kLogFloor = 1e-12;

double theta(const PrimitiveParams& gt, const PrimitiveParams& pred) {
  if (type_of(gt) == PrimitiveType::kSphere) return 1.0;
  const auto a = axis_of(gt);
  const auto b = axis_of(pred);
  if (!a || !b) return 0.0;
  return std::min(1.0, std::abs(a->dot(*b)));
}

}  // namespace

nlohmann::ordered_json LossBreakdown::to_json() const {
  return {{"seg", seg}, {"norm", norm}, {"type", type_}, {"res", res}, {"axis", axis}, {"total", total}};
}

double seg_loss(const MembershipMatrix& w, const MembershipMatrix& w_hat, const Assignment& match) {
  const Index k = w.num_primitives();
  if (k == 0) return 0.0;
  double sum = 0.0;
  for (Index g = 0; g < k; ++g) {
    const Index p = match.pred_for(g);
    sum += p < 0 ? 1.0 : 1.0 - riou(w.weights.col(g), w_hat.weights.col(p));
  }
  return sum / static_cast<double>(k);
}

double normal_loss(const Eigen::MatrixX3d& n, const Eigen::MatrixX3d& n_hat) {
  if (n.rows() != n_hat.rows()) throw std::invalid_argument("normal_loss: row counts differ");
  if (n.rows() == 0) return 0.0;
  const Eigen::ArrayXd cosines = (n.array() * n_hat.array()).rowwise().sum().abs();
  return (1.0 - cosines.min(1.0)).sum() / static_cast<double>(n.rows());
}

double type_loss(const TypeMatrix& t, const Eigen::MatrixXd& t_hat, const MembershipMatrix& w) {
  const Index n = t.onehot.rows();
  if (t_hat.rows() != n || w.num_points() != n) throw std::invalid_argument("type_loss: row counts differ");
  if (n == 0) return 0.0;
  double sum = 0.0;
  for (Index i = 0; i < n; ++i) {
    if ((w.weights.row(i).array() == 0.0).all()) continue;
    for (Index l = 0; l < kNumTypes; ++l) {
      const double ti = t.onehot(i, l);
      if (ti != 0.0) sum -= ti * std::log(std::max(t_hat(i, l), kLogFloor));
    }
  }
  return sum / static_cast<double>(n);
}

double residual_loss(const std::vector<BoundedSurface>& surfaces,
                     const std::vector<std::optional<PrimitiveParams>>& matched) {
  if (matched.size() != surfaces.size()) throw std::invalid_argument("residual_loss: one entry per surface");
  double sum = 0.0;
  int count = 0;
  for (std::size_t k = 0; k < surfaces.size(); ++k) {
    if (!matched[k]) continue;
    const auto& s = surfaces[k].samples;
    sum += distances(s, *matched[k]).squaredNorm() / static_cast<double>(std::max<Index>(1, s.rows()));
    ++count;
  }
  return count ? sum / count : 0.0;
}

double axis_loss(const std::vector<PrimitiveParams>& gt,
                 const std::vector<std::optional<PrimitiveParams>>& matched) {
  if (matched.size() != gt.size()) throw std::invalid_argument("axis_loss: one entry per primitive");
  double sum = 0.0;
  int count = 0;
  for (std::size_t k = 0; k < gt.size(); ++k) {
    if (!matched[k]) continue;
    sum += 1.0 - theta(gt[k], *matched[k]);
    ++count;
  }
  return count ? sum / count : 0.0;
}

Eigen::MatrixXd point_type_probabilities(const FitResult& fit) {
  if (fit.point_types) return *fit.point_types;
  const Eigen::MatrixXd& w = fit.membership.weights;
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(w.rows(), kNumTypes);
  for (std::size_t k = 0; k < fit.primitives.size(); ++k)
    t.col(type_index(fit.primitives[k].type())) += w.col(static_cast<Index>(k));
  const Eigen::VectorXd rest = (1.0 - w.rowwise().sum().array()).max(0.0);
  t.colwise() += rest / static_cast<double>(kNumTypes);
  return t;
}

std::vector<std::optional<PrimitiveParams>> matched_in_gt_types(const GroundTruthScene& scene,
                                                                const FitResult& fit,
                                                                const Assignment& match) {
  std::vector<std::optional<PrimitiveParams>> out(scene.surfaces.size());
  const Eigen::MatrixX3d empty;
  const Eigen::MatrixX3d& normals =
      fit.normals ? *fit.normals : (scene.cloud.normals ? *scene.cloud.normals : empty);
  for (const auto& [g, p] : match.pairs) {
    const auto& pred = fit.primitives[static_cast<std::size_t>(p)].params;
    const PrimitiveType want = scene.surfaces[static_cast<std::size_t>(g)].type();
    out[static_cast<std::size_t>(g)] = pred;
    if (type_of(pred) == want) continue;
    const Eigen::VectorXd w = fit.membership.weights.col(p);
    try {
      const Estimate e = fit_primitive(want, EstimatorInput{scene.cloud.positions, normals, w});
      if (check_params(e.params).empty()) out[static_cast<std::size_t>(g)] = e.params;
    } catch (const std::exception&) {
      // keep the predicted parameters
    }
  }
  return out;
}

LossBreakdown total_loss(const GroundTruthScene& scene, const FitResult& fit) {
  const PrimitiveMatch m = match_primitives(scene.membership, fit.membership);
  LossBreakdown out;
  out.seg = seg_loss(scene.membership, fit.membership, m.assignment);
  if (fit.normals && scene.cloud.normals) out.norm = normal_loss(*scene.cloud.normals, *fit.normals);
  out.type_ = type_loss(scene.types, point_type_probabilities(fit), scene.membership);
  const auto matched = matched_in_gt_types(scene, fit, m.assignment);
  out.res = residual_loss(scene.surfaces, matched);
  out.axis = axis_loss(scene.primitive_params(), matched);
  out.total = out.seg;
  out.total += out.norm;
  out.total += out.type_;
  out.total += out.res;
  out.total += out.axis;
  return out;
}

}  // namespace primfit
