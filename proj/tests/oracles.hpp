// Reference implementations used only by tests. Everything here is written
// with plain loops over std::vector so it shares no code path with the
// Eigen-based library.
#ifndef FEDCLUST_TESTS_ORACLES_HPP
#define FEDCLUST_TESTS_ORACLES_HPP

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "fedclust/linalg.hpp"

namespace oracle {

using fedclust::Index;
using fedclust::Matrix;

// Dense row-major copy, so oracle arithmetic never touches Eigen kernels.
struct Dense {
  Index rows = 0, cols = 0;
  std::vector<double> a;
  Dense() = default;
  Dense(Index r, Index c) : rows(r), cols(c), a(std::size_t(r * c), 0.0) {}
  explicit Dense(const Matrix& m) : Dense(m.rows(), m.cols()) {
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) at(i, j) = m(i, j);
  }
  double& at(Index i, Index j) { return a[std::size_t(i * cols + j)]; }
  double at(Index i, Index j) const { return a[std::size_t(i * cols + j)]; }
  Matrix to_eigen() const {
    Matrix m(rows, cols);
    for (Index i = 0; i < rows; ++i)
      for (Index j = 0; j < cols; ++j) m(i, j) = at(i, j);
    return m;
  }
};

inline Dense matmul(const Dense& x, const Dense& y) {
  Dense out(x.rows, y.cols);
  for (Index i = 0; i < x.rows; ++i)
    for (Index j = 0; j < y.cols; ++j) {
      double s = 0.0;
      for (Index k = 0; k < x.cols; ++k) s += x.at(i, k) * y.at(k, j);
      out.at(i, j) = s;
    }
  return out;
}

inline Dense transpose(const Dense& x) {
  Dense out(x.cols, x.rows);
  for (Index i = 0; i < x.rows; ++i)
    for (Index j = 0; j < x.cols; ++j) out.at(j, i) = x.at(i, j);
  return out;
}

inline double frob_sq(const Dense& x) {
  double s = 0.0;
  for (double v : x.a) s += v * v;
  return s;
}

inline double frob_sq(const Matrix& m) { return frob_sq(Dense(m)); }

inline double rel_err(const Matrix& got, const Matrix& want) {
  const double denom = std::sqrt(frob_sq(want));
  Dense d(got);
  Dense w(want);
  double num = 0.0;
  for (std::size_t i = 0; i < d.a.size(); ++i) num += (d.a[i] - w.a[i]) * (d.a[i] - w.a[i]);
  num = std::sqrt(num);
  return denom > 0.0 ? num / denom : num;
}

/// reg_H by explicit column sums.
inline double reg_h(const Matrix& h, double rho, double nu) {
  double out = 0.0;
  for (Index j = 0; j < h.cols(); ++j) {
    double sum = 0.0, sq = 0.0;
    for (Index i = 0; i < h.rows(); ++i) {
      sum += h(i, j);
      sq += h(i, j) * h(i, j);
    }
    out += 0.5 * rho * (sum * sum - sq) + 0.5 * nu * sq;
  }
  return out;
}

/// ||X - W H||^2 / N_p + reg_H / omega via triple-loop products.
inline double objective_local(const Matrix& w, const Matrix& h, const Matrix& x, double omega,
                              double rho, double nu) {
  Dense r = matmul(Dense(w), Dense(h));
  Dense xd(x);
  double fit = 0.0;
  for (std::size_t i = 0; i < r.a.size(); ++i) fit += (xd.a[i] - r.a[i]) * (xd.a[i] - r.a[i]);
  return fit / double(x.cols()) + reg_h(h, rho, nu) / omega;
}

/// Cyclic Jacobi eigenvalues of a symmetric matrix, sorted descending.
inline std::vector<double> jacobi_eigenvalues(const Matrix& sym, int sweeps = 100) {
  const Index n = sym.rows();
  Dense a(sym);
  for (int sweep = 0; sweep < sweeps; ++sweep) {
    double off = 0.0;
    for (Index p = 0; p < n; ++p)
      for (Index q = p + 1; q < n; ++q) off += a.at(p, q) * a.at(p, q);
    if (off < 1e-30) break;
    for (Index p = 0; p < n; ++p) {
      for (Index q = p + 1; q < n; ++q) {
        if (std::abs(a.at(p, q)) < 1e-300) continue;
        const double theta = (a.at(q, q) - a.at(p, p)) / (2.0 * a.at(p, q));
        const double t = (theta >= 0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
        const double c = 1.0 / std::sqrt(t * t + 1.0);
        const double s = t * c;
        for (Index k = 0; k < n; ++k) {
          const double akp = a.at(k, p), akq = a.at(k, q);
          a.at(k, p) = c * akp - s * akq;
          a.at(k, q) = s * akp + c * akq;
        }
        for (Index k = 0; k < n; ++k) {
          const double apk = a.at(p, k), aqk = a.at(q, k);
          a.at(p, k) = c * apk - s * aqk;
          a.at(q, k) = s * apk + c * aqk;
        }
      }
    }
  }
  std::vector<double> ev(static_cast<std::size_t>(n));
  for (Index i = 0; i < n; ++i) ev[std::size_t(i)] = a.at(i, i);
  std::sort(ev.begin(), ev.end(), std::greater<>());
  return ev;
}

inline double jacobi_lambda_max(const Matrix& sym) { return jacobi_eigenvalues(sym).front(); }

/// Central finite-difference gradient of f at x, step h.
template <typename F>
Matrix finite_diff(F&& f, const Matrix& x, double h = 1e-6) {
  Matrix g(x.rows(), x.cols());
  Matrix probe = x;
  for (Index i = 0; i < x.rows(); ++i)
    for (Index j = 0; j < x.cols(); ++j) {
      const double v = probe(i, j);
      probe(i, j) = v + h;
      const double up = f(probe);
      probe(i, j) = v - h;
      const double down = f(probe);
      probe(i, j) = v;
      g(i, j) = (up - down) / (2.0 * h);
    }
  return g;
}

/// Best-permutation accuracy by exhaustive search over all k! relabelings.
inline double brute_force_accuracy(const std::vector<int>& pred, const std::vector<int>& truth,
                                   int k) {
  std::vector<int> perm(static_cast<std::size_t>(k));
  std::iota(perm.begin(), perm.end(), 0);
  std::size_t best = 0;
  do {
    std::size_t hits = 0;
    for (std::size_t j = 0; j < pred.size(); ++j)
      if (perm[std::size_t(pred[j])] == truth[j]) ++hits;
    best = std::max(best, hits);
  } while (std::next_permutation(perm.begin(), perm.end()));
  return double(best) / double(pred.size());
}

/// Projection of z onto the 2-simplex {(t, 1-t)} by iterative grid refinement.
inline std::pair<double, double> simplex2_by_grid(double z0, double z1) {
  double lo = 0.0, hi = 1.0, best = 0.0;
  for (int level = 0; level < 40; ++level) {
    double best_cost = INFINITY;
    const int steps = 100;
    for (int i = 0; i <= steps; ++i) {
      const double t = lo + (hi - lo) * double(i) / steps;
      const double c = (t - z0) * (t - z0) + (1.0 - t - z1) * (1.0 - t - z1);
      if (c < best_cost) {
        best_cost = c;
        best = t;
      }
    }
    const double width = (hi - lo) / steps;
    lo = std::max(0.0, best - width);
    hi = std::min(1.0, best + width);
  }
  return {best, 1.0 - best};
}

/// Upper-tail chi-square check: statistic for observed counts vs uniform.
inline double chi_square_uniform(const std::vector<std::size_t>& counts) {
  double total = 0.0;
  for (auto c : counts) total += double(c);
  const double expect = total / double(counts.size());
  double stat = 0.0;
  for (auto c : counts) stat += (double(c) - expect) * (double(c) - expect) / expect;
  return stat;
}

}  // namespace oracle

#endif  // FEDCLUST_TESTS_ORACLES_HPP
