#ifndef FEDCLUST_LINALG_HPP
#define FEDCLUST_LINALG_HPP

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <numeric>
#include <random>
#include <stdexcept>
#include <vector>

namespace fedclust {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

class DimensionError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

/// Deterministic seeded generator. Component streams are derived with
/// `substream(tag)`, which seeds a fresh engine with `seed ^ tag`.
class Rng {
 public:
  explicit Rng(std::uint64_t seed = 0) : seed_(seed), engine_(seed) {}

  std::uint64_t seed() const { return seed_; }
  Rng substream(std::uint64_t tag) const { return Rng(seed_ ^ tag); }

  double uniform(double lo = 0.0, double hi = 1.0) {
    return std::uniform_real_distribution<double>(lo, hi)(engine_);
  }
  double normal() { return std::normal_distribution<double>(0.0, 1.0)(engine_); }
  /// Uniform integer in [0, n).
  std::size_t below(std::size_t n) {
    return std::uniform_int_distribution<std::size_t>(0, n - 1)(engine_);
  }

  std::mt19937_64& engine() { return engine_; }

 private:
  std::uint64_t seed_;
  std::mt19937_64 engine_;
};

// Sub-seed tags for the independent streams used across the library.
namespace stream {
inline constexpr std::uint64_t kInit = 0x1A17'0000'0000'0001ULL;
inline constexpr std::uint64_t kSampling = 0x5A3F'0000'0000'0002ULL;
inline constexpr std::uint64_t kData = 0xDA7A'0000'0000'0003ULL;
inline constexpr std::uint64_t kPartition = 0x9A27'0000'0000'0004ULL;
inline constexpr std::uint64_t kKMeans = 0xC1C5'0000'0000'0005ULL;
}  // namespace stream

template <typename Derived>
typename Derived::Scalar frob_norm_sq(const Eigen::MatrixBase<Derived>& a) {
  return a.squaredNorm();
}

namespace detail {

// Power iteration from `v` (unit norm). Restarts from e_0, e_1, ... when the
// iterate collapses into the null space. Returns the Rayleigh quotient and
// leaves the final iterate in `v`.
template <typename Derived, typename Vec>
typename Derived::Scalar power_iterate(const Eigen::MatrixBase<Derived>& a, Vec& v,
                                       typename Derived::Scalar tol, int max_iter) {
  using Scalar = typename Derived::Scalar;
  const Index n = a.rows();
  const Scalar collapse =
      a.cwiseAbs().maxCoeff() * std::numeric_limits<Scalar>::epsilon() * Scalar(n);
  Index restart = 0;
  Scalar lambda = 0;
  Vec av(n);
  for (int it = 0; it < max_iter; ++it) {
    av.noalias() = a * v;
    const Scalar norm = av.norm();
    if (norm <= collapse) {
      if (restart >= n) return Scalar(0);
      v = Vec::Unit(n, restart++);
      continue;
    }
    lambda = v.dot(av);
    if ((av - lambda * v).norm() <= tol * std::abs(lambda)) break;
    v = av / norm;
  }
  return lambda;
}

}  // namespace detail

/// Largest eigenvalue of a symmetric positive semidefinite matrix by power
/// iteration.
///
/// The start vector is the normalized all-ones vector; if the iterate
/// collapses into the null space, iteration restarts from the unit basis
/// vectors in order. Iteration stops once ||A v - lambda v|| <= tol * lambda.
/// A start orthogonal to the top eigenspace converges to a smaller
/// eigenpair, so a second run starts from the ramp (1, 2, ..., n) made
/// orthogonal to the first eigenvector, and the larger estimate wins.
template <typename Derived>
typename Derived::Scalar lambda_max_psd(const Eigen::MatrixBase<Derived>& a,
                                        typename Derived::Scalar tol = 1e-6,
                                        int max_iter = 1000) {
  using Scalar = typename Derived::Scalar;
  using Vec = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  if (a.rows() != a.cols()) {
    throw DimensionError("lambda_max_psd: matrix must be square");
  }
  const Index n = a.rows();
  if (n == 0 || a.cwiseAbs().maxCoeff() == Scalar(0)) return Scalar(0);

  Vec v = Vec::Ones(n) / std::sqrt(Scalar(n));
  Scalar lambda = detail::power_iterate(a, v, tol, max_iter);
  if (n > 1) {
    Vec u = Vec::LinSpaced(n, Scalar(1), Scalar(n));
    u -= u.dot(v) * v;
    const Scalar un = u.norm();
    if (un > std::sqrt(std::numeric_limits<Scalar>::epsilon())) {
      u /= un;
      lambda = std::max(lambda, detail::power_iterate(a, u, tol, max_iter));
    }
  }
  return std::max(lambda, Scalar(0));
}

template <typename Derived>
auto project_box(const Eigen::MatrixBase<Derived>& w, typename Derived::Scalar lo,
                 typename Derived::Scalar hi) {
  if (lo > hi) throw std::invalid_argument("project_box: lower bound exceeds upper bound");
  using Plain = typename Derived::PlainObject;
  return Plain(w.cwiseMax(lo).cwiseMin(hi));
}

template <typename Derived>
auto project_nonneg(const Eigen::MatrixBase<Derived>& h) {
  using Plain = typename Derived::PlainObject;
  return Plain(h.cwiseMax(typename Derived::Scalar(0)));
}

/// Euclidean projection of a vector onto the probability simplex
/// {x >= 0, sum x = 1} by the sort-and-threshold method. A column that is
/// already feasible up to rounding in its sum is left untouched, which makes
/// the projection exactly idempotent.
template <typename Derived>
void project_simplex_inplace(Eigen::MatrixBase<Derived> const& column_in) {
  auto& column = const_cast<Eigen::MatrixBase<Derived>&>(column_in);
  using Scalar = typename Derived::Scalar;
  const Index n = column.size();
  if (n == 0) return;
  const Scalar slack = Scalar(8) * Scalar(n) * std::numeric_limits<Scalar>::epsilon();
  if (column.minCoeff() >= Scalar(0) && std::abs(column.sum() - Scalar(1)) <= slack) return;
  std::vector<Scalar> sorted(column.derived().data(), column.derived().data() + n);
  std::sort(sorted.begin(), sorted.end(), std::greater<>());
  Scalar cumulative = 0;
  Scalar theta = 0;
  for (Index k = 0; k < n; ++k) {
    cumulative += sorted[k];
    const Scalar candidate = (cumulative - Scalar(1)) / Scalar(k + 1);
    if (sorted[k] - candidate > Scalar(0)) theta = candidate;
  }
  for (Index i = 0; i < n; ++i) column(i) = std::max(column(i) - theta, Scalar(0));
}

template <typename Derived>
auto project_simplex_columns(const Eigen::MatrixBase<Derived>& h) {
  using Plain = typename Derived::PlainObject;
  Plain out = h;
  for (Index j = 0; j < out.cols(); ++j) project_simplex_inplace(out.col(j));
  return out;
}

/// m distinct indices from {0, ..., population-1} by partial Fisher-Yates.
/// The returned order is the draw order.
inline std::vector<std::size_t> sample_without_replacement(std::size_t population,
                                                           std::size_t m, Rng& rng) {
  if (m < 1 || m > population) {
    throw std::invalid_argument("sample_without_replacement: need 1 <= m <= population");
  }
  std::vector<std::size_t> pool(population);
  std::iota(pool.begin(), pool.end(), std::size_t{0});
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + rng.below(population - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(m);
  return pool;
}

inline bool all_finite(const Matrix& a) { return a.allFinite(); }

}  // namespace fedclust

#endif  // FEDCLUST_LINALG_HPP
