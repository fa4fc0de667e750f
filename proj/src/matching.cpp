#include "primfit/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>

#include "primfit/distance.hpp"

namespace primfit {

namespace {

constexpr double kTieTolerance = 1e-9;

// O(n^2 m) shortest augmenting path with potentials, n <= m. Returns the
// column assigned to each row.
std::vector<Index> solve_rows_le_cols(const Eigen::MatrixXd& a) {
  const Index n = a.rows();
  const Index m = a.cols();
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(m + 1, 0.0);
  std::vector<Index> p(m + 1, 0), way(m + 1, 0);
  for (Index i = 1; i <= n; ++i) {
    p[0] = i;
    Index j0 = 0;
    std::vector<double> minv(m + 1, inf);
    std::vector<char> used(m + 1, 0);
    do {
      used[j0] = 1;
      const Index i0 = p[j0];
      double delta = inf;
      Index j1 = 0;
      for (Index j = 1; j <= m; ++j) {
        if (used[j]) continue;
        const double cur = a(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (Index j = 0; j <= m; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const Index j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<Index> row_to_col(n, -1);
  for (Index j = 1; j <= m; ++j) {
    if (p[j] != 0) row_to_col[p[j] - 1] = j - 1;
  }
  return row_to_col;
}

// Optimal total of a rectangular problem (size min(rows, cols)).
double optimum(const Eigen::MatrixXd& cost) {
  if (cost.rows() == 0 || cost.cols() == 0) return 0.0;
  const bool transpose = cost.rows() > cost.cols();
  const Eigen::MatrixXd a = transpose ? Eigen::MatrixXd(cost.transpose()) : cost;
  const auto match = solve_rows_le_cols(a);
  double total = 0.0;
  for (Index i = 0; i < a.rows(); ++i) total += a(i, match[i]);
  return total;
}

Eigen::MatrixXd submatrix(const Eigen::MatrixXd& cost, const std::vector<Index>& rows,
                          const std::vector<Index>& cols) {
  Eigen::MatrixXd s(static_cast<Index>(rows.size()), static_cast<Index>(cols.size()));
  for (std::size_t r = 0; r < rows.size(); ++r)
    for (std::size_t c = 0; c < cols.size(); ++c) s(static_cast<Index>(r), static_cast<Index>(c)) = cost(rows[r], cols[c]);
  return s;
}

bool same_total(double a, double b) {
  return std::abs(a - b) <= kTieTolerance * std::max(1.0, std::abs(b));
}

}  // namespace

double riou(const Eigen::VectorXd& w, const Eigen::VectorXd& w_hat) {
  if (w.size() != w_hat.size()) throw std::invalid_argument("riou: length mismatch");
  const double inter = w.dot(w_hat);
  const double denom = w.lpNorm<1>() + w_hat.lpNorm<1>() - inter;
  if (!(denom > 0.0)) return 0.0;
  return inter / denom;
}

Index Assignment::pred_for(Index gt) const {
  for (const auto& [g, p] : pairs) {
    if (g == gt) return p;
  }
  return -1;
}

Assignment hungarian(const Eigen::MatrixXd& cost) {
  if (!cost.allFinite()) throw std::invalid_argument("hungarian: costs must be finite");
  const Index n = cost.rows();
  const Index m = cost.cols();
  const Index size = std::min(n, m);
  const double best = optimum(cost);

  // Lexicographic refinement: fix pairs one ground-truth row at a time, taking
  // the lowest column that still admits an optimal completion.
  Assignment out;
  std::vector<char> col_used(static_cast<std::size_t>(m), 0);
  double fixed_cost = 0.0;
  Index fixed = 0;
  for (Index i = 0; i < n && fixed < size; ++i) {
    std::vector<Index> rest_rows;
    for (Index r = i + 1; r < n; ++r) rest_rows.push_back(r);
    bool placed = false;
    for (Index j = 0; j < m && !placed; ++j) {
      if (col_used[static_cast<std::size_t>(j)]) continue;
      std::vector<Index> rest_cols;
      for (Index c = 0; c < m; ++c) {
        if (c != j && !col_used[static_cast<std::size_t>(c)]) rest_cols.push_back(c);
      }
      const Index required = size - fixed - 1;
      const Index available = std::min(static_cast<Index>(rest_rows.size()), static_cast<Index>(rest_cols.size()));
      if (required != available) continue;
      const double total = fixed_cost + cost(i, j) + optimum(submatrix(cost, rest_rows, rest_cols));
      if (same_total(total, best)) {
        out.pairs.emplace_back(i, j);
        col_used[static_cast<std::size_t>(j)] = 1;
        fixed_cost += cost(i, j);
        ++fixed;
        placed = true;
      }
    }
    if (!placed) out.unmatched_gt.push_back(i);
  }
  for (Index i = static_cast<Index>(out.pairs.size() + out.unmatched_gt.size()); i < n; ++i)
    out.unmatched_gt.push_back(i);
  std::sort(out.unmatched_gt.begin(), out.unmatched_gt.end());
  for (Index j = 0; j < m; ++j) {
    if (!col_used[static_cast<std::size_t>(j)]) out.unmatched_pred.push_back(j);
  }
  out.total_score = 0.0;
  for (const auto& [g, p] : out.pairs) out.total_score += cost(g, p);
  return out;
}

PrimitiveMatch match_primitives(const MembershipMatrix& w, const MembershipMatrix& w_hat) {
  if (w.num_points() != w_hat.num_points())
    throw std::invalid_argument("match_primitives: point counts differ");
  const Index k = w.num_primitives();
  const Index kp = w_hat.num_primitives();
  Eigen::MatrixXd score(k, kp);
  for (Index a = 0; a < k; ++a)
    for (Index b = 0; b < kp; ++b) score(a, b) = riou(w.weights.col(a), w_hat.weights.col(b));

  PrimitiveMatch out;
  out.assignment = hungarian((1.0 - score.array()).matrix());
  double sum = 0.0;
  for (const auto& [g, p] : out.assignment.pairs) {
    out.pair_riou.push_back(score(g, p));
    sum += score(g, p);
  }
  if (!out.pair_riou.empty()) out.mean_riou = sum / static_cast<double>(out.pair_riou.size());
  return out;
}

Assignment match_by_residual(const std::vector<BoundedSurface>& surfaces,
                             const std::vector<PrimitiveParams>& prims) {
  const Index k = static_cast<Index>(surfaces.size());
  const Index kp = static_cast<Index>(prims.size());
  Eigen::MatrixXd cost(k, kp);
  for (Index a = 0; a < k; ++a) {
    const auto& s = surfaces[static_cast<std::size_t>(a)].samples;
    for (Index b = 0; b < kp; ++b) {
      cost(a, b) = distances(s, prims[static_cast<std::size_t>(b)]).squaredNorm() /
                   static_cast<double>(std::max<Index>(1, s.rows()));
    }
  }
  return hungarian(cost);
}

}  // namespace primfit
