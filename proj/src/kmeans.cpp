#include "fedclust/algorithms.hpp"

namespace fedclust {

namespace {

// Nearest centroid per column (lowest index on ties) and the total cost.
double assign_nearest(const Matrix& x, const Matrix& centroids, std::vector<int>& labels) {
  const Index k = centroids.cols();
  double cost = 0.0;
  labels.resize(std::size_t(x.cols()));
  for (Index j = 0; j < x.cols(); ++j) {
    int best = 0;
    double best_d = (x.col(j) - centroids.col(0)).squaredNorm();
    for (Index c = 1; c < k; ++c) {
      const double d = (x.col(j) - centroids.col(c)).squaredNorm();
      if (d < best_d) {
        best_d = d;
        best = int(c);
      }
    }
    labels[std::size_t(j)] = best;
    cost += best_d;
  }
  return cost;
}

Matrix seed_plusplus(const Matrix& x, int k, Rng& rng) {
  const Index n = x.cols();
  Matrix centroids(x.rows(), k);
  centroids.col(0) = x.col(Index(rng.below(std::size_t(n))));
  Vector nearest(n);
  for (Index j = 0; j < n; ++j) nearest(j) = (x.col(j) - centroids.col(0)).squaredNorm();
  for (int c = 1; c < k; ++c) {
    const double total = nearest.sum();
    Index pick = 0;
    if (total > 0.0) {
      double target = rng.uniform(0.0, total);
      pick = n - 1;
      for (Index j = 0; j < n; ++j) {
        target -= nearest(j);
        if (target < 0.0 && nearest(j) > 0.0) {
          pick = j;
          break;
        }
      }
    } else {
      pick = Index(rng.below(std::size_t(n)));
    }
    centroids.col(c) = x.col(pick);
    for (Index j = 0; j < n; ++j) {
      nearest(j) = std::min(nearest(j), (x.col(j) - centroids.col(c)).squaredNorm());
    }
  }
  return centroids;
}

}  // namespace

KMeansResult run_kmeanspp(const Matrix& x, int k, Rng& rng, int max_iters) {
  if (k < 1) throw std::invalid_argument("k-means: k must be positive");
  if (Index(k) > x.cols()) throw std::invalid_argument("k-means: more clusters than samples");

  KMeansResult out;
  out.centroids = seed_plusplus(x, k, rng);
  out.cost = assign_nearest(x, out.centroids, out.labels);

  std::vector<int> next;
  for (int it = 0; it < max_iters; ++it) {
    Matrix sums = Matrix::Zero(x.rows(), k);
    std::vector<Index> counts(std::size_t(k), 0);
    for (Index j = 0; j < x.cols(); ++j) {
      sums.col(out.labels[std::size_t(j)]) += x.col(j);
      ++counts[std::size_t(out.labels[std::size_t(j)])];
    }
    // Empty clusters keep their previous centroid.
    for (int c = 0; c < k; ++c) {
      if (counts[std::size_t(c)] > 0) out.centroids.col(c) = sums.col(c) / double(counts[std::size_t(c)]);
    }
    out.cost = assign_nearest(x, out.centroids, next);
    out.cost_history.push_back(out.cost);
    out.iterations = it + 1;
    const bool stable = next == out.labels;
    out.labels.swap(next);
    if (stable) break;
  }
  return out;
}

}  // namespace fedclust
