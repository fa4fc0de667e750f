#include <stdexcept>

#include "primfit/estimators.hpp"
#include "primfit/fitters.hpp"

namespace primfit {

FitResult discard_small(const FitResult& fit, double threshold) {
  const Index n = fit.membership.num_points();
  FitResult out = fit;
  out.primitives.clear();
  std::vector<Index> kept;
  for (std::size_t k = 0; k < fit.primitives.size(); ++k) {
    const double frac = n > 0 ? fit.membership.weights.col(static_cast<Index>(k)).sum() / static_cast<double>(n) : 0.0;
    if (frac < threshold) continue;
    kept.push_back(static_cast<Index>(k));
    out.primitives.push_back(fit.primitives[k]);
  }
  out.membership.weights.resize(n, static_cast<Index>(kept.size()));
  for (std::size_t j = 0; j < kept.size(); ++j)
    out.membership.weights.col(static_cast<Index>(j)) = fit.membership.weights.col(kept[j]);
  return out;
}

std::vector<PrimitiveType> vote_types(const Eigen::MatrixXd& t_hat, const Eigen::MatrixXd& w_hat) {
  if (t_hat.rows() != w_hat.rows() || t_hat.cols() != kNumTypes)
    throw std::invalid_argument("vote_types: expected N x 4 types and N x K membership");
  const Eigen::MatrixXd votes = t_hat.transpose() * w_hat;  // 4 x K
  std::vector<PrimitiveType> out;
  for (Index k = 0; k < votes.cols(); ++k) {
    Index best = 0;
    for (Index l = 1; l < kNumTypes; ++l) {
      if (votes(l, k) > votes(best, k)) best = l;
    }
    out.push_back(static_cast<PrimitiveType>(best));
  }
  return out;
}

FitResult oracle_fit(const GroundTruthScene& scene) {
  if (!scene.cloud.normals) throw std::invalid_argument("oracle_fit: the scene has no normals");
  const auto types = scene.primitive_types();
  const auto est = estimate_all(scene.cloud.positions, *scene.cloud.normals, scene.membership, types);
  FitResult fit;
  fit.meta.method = "oracle";
  fit.meta.seed = scene.seed;
  for (std::size_t k = 0; k < est.size(); ++k) {
    FittedPrimitive fp;
    if (est[k].params && !est[k].trivialized) {
      fp.params = *est[k].params;
    } else {
      fp.params = scene.surfaces[k].params;
      fit.meta.diagnostics.push_back(est[k].diagnostic + " (ground truth used)");
    }
    fit.primitives.push_back(fp);
  }
  fit.membership = scene.membership;
  fit.normals = scene.cloud.normals;
  fit.point_types = scene.types.onehot;
  return fit;
}

FitResult ground_truth_fit(const GroundTruthScene& scene) {
  FitResult fit;
  fit.meta.method = "ground_truth";
  fit.meta.seed = scene.seed;
  for (const auto& s : scene.surfaces) fit.primitives.push_back({s.params, 1.0});
  fit.membership = scene.membership;
  fit.normals = scene.cloud.normals;
  fit.point_types = scene.types.onehot;
  return fit;
}

}  // namespace primfit
