#include "fedclust/metrics.hpp"

#include <cmath>
#include <string>

namespace fedclust {

double epsilon(double f_prev, double f_cur) {
  if (!(f_prev > 0.0)) throw UndefinedStatistic("epsilon: previous objective must be positive");
  return std::abs(f_cur - f_prev) / f_prev;
}

std::vector<int> assign_labels(const Matrix& h) {
  std::vector<int> labels(std::size_t(h.cols()), 0);
  for (Index j = 0; j < h.cols(); ++j) {
    Index best = 0;
    for (Index i = 1; i < h.rows(); ++i) {
      if (h(i, j) > h(best, j)) best = i;
    }
    labels[std::size_t(j)] = int(best);
  }
  return labels;
}

// Shortest augmenting path with potentials, O(n^3).
std::vector<int> hungarian_min(const Matrix& cost) {
  if (cost.rows() != cost.cols()) throw DimensionError("hungarian_min: cost must be square");
  const int n = int(cost.rows());
  const double inf = std::numeric_limits<double>::infinity();
  std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0), minv(n + 1);
  std::vector<int> match(n + 1, 0), way(n + 1, 0);
  std::vector<char> used(n + 1);
  for (int i = 1; i <= n; ++i) {
    match[0] = i;
    int j0 = 0;
    std::fill(minv.begin(), minv.end(), inf);
    std::fill(used.begin(), used.end(), 0);
    do {
      used[j0] = 1;
      const int i0 = match[j0];
      double delta = inf;
      int j1 = 0;
      for (int j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (int j = 0; j <= n; ++j) {
        if (used[j]) {
          u[match[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (match[j0] != 0);
    do {
      const int j1 = way[j0];
      match[j0] = match[j1];
      j0 = j1;
    } while (j0);
  }
  std::vector<int> row_to_col(n, -1);
  for (int j = 1; j <= n; ++j) row_to_col[match[j] - 1] = j - 1;
  return row_to_col;
}

double clustering_accuracy(std::span<const int> pred, std::span<const int> truth, int k) {
  if (pred.size() != truth.size()) throw DimensionError("clustering_accuracy: length mismatch");
  if (k < 1) throw std::invalid_argument("clustering_accuracy: k must be positive");
  if (pred.empty()) return 1.0;
  Matrix confusion = Matrix::Zero(k, k);
  for (std::size_t j = 0; j < pred.size(); ++j) {
    if (pred[j] < 0 || pred[j] >= k || truth[j] < 0 || truth[j] >= k) {
      throw std::out_of_range("clustering_accuracy: label " +
                              std::to_string(pred[j] < 0 || pred[j] >= k ? pred[j] : truth[j]) +
                              " outside [0, k)");
    }
    confusion(pred[j], truth[j]) += 1.0;
  }
  const auto match = hungarian_min(-confusion);
  double hits = 0.0;
  for (int i = 0; i < k; ++i) hits += confusion(i, match[std::size_t(i)]);
  return hits / double(pred.size());
}

}  // namespace fedclust
