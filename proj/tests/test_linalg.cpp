#include <doctest.h>

#include <set>

#include "fedclust/linalg.hpp"
#include "oracles.hpp"

using namespace fedclust;

namespace {

Matrix random_matrix(Index r, Index c, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Matrix m(r, c);
  for (Index j = 0; j < c; ++j)
    for (Index i = 0; i < r; ++i) m(i, j) = rng.uniform(lo, hi);
  return m;
}

}  // namespace

TEST_CASE("frob_norm_sq") {
  CHECK(frob_norm_sq(Matrix::Identity(2, 2)) == 2.0);
  CHECK(frob_norm_sq(Matrix::Zero(3, 4)) == 0.0);
  Rng rng(7);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = random_matrix(5, 4, rng);
    double loop = 0.0;
    for (Index i = 0; i < 5; ++i)
      for (Index j = 0; j < 4; ++j) loop += a(i, j) * a(i, j);
    CHECK(frob_norm_sq(a) == doctest::Approx(loop).epsilon(1e-12));
  }
}

TEST_CASE("lambda_max_psd") {
  CHECK(lambda_max_psd(Matrix::Identity(3, 3)) == doctest::Approx(1.0).epsilon(1e-12));
  Matrix d = Matrix::Zero(2, 2);
  d(0, 0) = 3.0;
  d(1, 1) = 1.0;
  CHECK(lambda_max_psd(d) == doctest::Approx(3.0).epsilon(1e-9));
  CHECK(lambda_max_psd(Matrix::Zero(3, 3)) == 0.0);

  SUBCASE("matches Jacobi oracle on random Gram matrices") {
    Rng rng(11);
    for (int t = 0; t < 50; ++t) {
      const Matrix a = random_matrix(6, 4, rng);
      const Matrix g = a.transpose() * a;
      const double want = oracle::jacobi_lambda_max(g);
      CHECK(std::abs(lambda_max_psd(g, 1e-12) - want) <= 1e-8 * want);
    }
  }
  SUBCASE("start vector orthogonal to the top eigenvector") {
    // The ones vector lies in the eigenspace of the smaller eigenvalue.
    Matrix a(2, 2);
    a << 2.0, -1.0, -1.0, 2.0;  // eigenvalues 3 (1,-1) and 1 (1,1)
    CHECK(lambda_max_psd(a, 1e-12) == doctest::Approx(3.0).epsilon(1e-9));
  }
  SUBCASE("positive homogeneity") {
    Rng rng(3);
    const Matrix a = random_matrix(5, 5, rng);
    const Matrix g = a * a.transpose();
    const double base = lambda_max_psd(g, 1e-12);
    CHECK(lambda_max_psd(Matrix(4.5 * g), 1e-12) == doctest::Approx(4.5 * base).epsilon(1e-8));
  }
  CHECK_THROWS_AS(lambda_max_psd(Matrix::Zero(2, 3)), DimensionError);
}

TEST_CASE("project_box") {
  Matrix w(2, 2);
  w << -2.0, 0.5, 3.0, 1.0;
  Matrix want(2, 2);
  want << 0.0, 0.5, 1.0, 1.0;
  CHECK(Matrix(project_box(w, 0.0, 1.0)) == want);
  CHECK(Matrix(project_box(want, 0.0, 1.0)) == want);
  CHECK_THROWS_AS(project_box(w, 1.0, 0.0), std::invalid_argument);

  Rng rng(5);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = random_matrix(4, 3, rng, -3.0, 3.0);
    const Matrix b = random_matrix(4, 3, rng, -3.0, 3.0);
    const Matrix pa = project_box(a, -0.5, 1.5);
    for (Index i = 0; i < 4; ++i)
      for (Index j = 0; j < 3; ++j) CHECK(pa(i, j) == std::min(1.5, std::max(-0.5, a(i, j))));
    CHECK(Matrix(project_box(pa, -0.5, 1.5)) == pa);
    const Matrix pb = project_box(b, -0.5, 1.5);
    CHECK((pa - pb).norm() <= (a - b).norm());
  }
}

TEST_CASE("project_nonneg") {
  Matrix h(1, 2);
  h << -1.0, 2.0;
  Matrix want(1, 2);
  want << 0.0, 2.0;
  CHECK(Matrix(project_nonneg(h)) == want);
  CHECK(Matrix(project_nonneg(want)) == want);

  Rng rng(9);
  for (int t = 0; t < 20; ++t) {
    const Matrix a = random_matrix(3, 5, rng);
    const Matrix b = random_matrix(3, 5, rng);
    const Matrix pa = project_nonneg(a);
    for (Index i = 0; i < 3; ++i)
      for (Index j = 0; j < 5; ++j) CHECK(pa(i, j) == std::max(0.0, a(i, j)));
    CHECK(Matrix(project_nonneg(pa)) == pa);
    CHECK((pa - Matrix(project_nonneg(b))).norm() <= (a - b).norm());
  }
}

TEST_CASE("project_simplex_columns") {
  Matrix h(2, 3);
  h << 1.0, 0.5, 2.0,
       0.0, 0.5, 0.0;
  const Matrix p = project_simplex_columns(h);
  CHECK(p(0, 0) == 1.0);
  CHECK(p(1, 0) == 0.0);
  CHECK(p(0, 1) == 0.5);
  CHECK(p(1, 1) == 0.5);
  const auto [g0, g1] = oracle::simplex2_by_grid(2.0, 0.0);
  CHECK(p(0, 2) == doctest::Approx(g0).epsilon(1e-9));
  CHECK(p(1, 2) == doctest::Approx(g1).epsilon(1e-9));

  Rng rng(13);
  for (int t = 0; t < 30; ++t) {
    const double z0 = rng.uniform(-2, 2), z1 = rng.uniform(-2, 2);
    Matrix z(2, 1);
    z << z0, z1;
    const Matrix pz = project_simplex_columns(z);
    const auto [o0, o1] = oracle::simplex2_by_grid(z0, z1);
    // The grid oracle resolves the minimizer only to about sqrt(machine eps).
    CHECK(std::abs(pz(0, 0) - o0) < 1e-7);
    CHECK(std::abs(pz(1, 0) - o1) < 1e-7);
  }
  const Matrix big = random_matrix(6, 40, rng, -2.0, 2.0);
  const Matrix pb = project_simplex_columns(big);
  for (Index j = 0; j < pb.cols(); ++j) {
    CHECK(pb.col(j).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(pb.col(j).minCoeff() >= 0.0);
  }
  CHECK(Matrix(project_simplex_columns(pb)) == pb);
}

TEST_CASE("sample_without_replacement") {
  Rng rng(1);
  auto all = sample_without_replacement(5, 5, rng);
  std::sort(all.begin(), all.end());
  CHECK(all == std::vector<std::size_t>{0, 1, 2, 3, 4});

  CHECK_THROWS_AS(sample_without_replacement(3, 4, rng), std::invalid_argument);
  CHECK_THROWS_AS(sample_without_replacement(3, 0, rng), std::invalid_argument);

  Rng a(42), b(42);
  CHECK(sample_without_replacement(10, 4, a) == sample_without_replacement(10, 4, b));

  SUBCASE("uniform marginals") {
    Rng r(2024);
    std::vector<std::size_t> counts(3, 0);
    const int draws = 30000;
    for (int i = 0; i < draws; ++i) ++counts[sample_without_replacement(3, 1, r)[0]];
    const double p = 1.0 / 3.0;
    const double sigma = std::sqrt(draws * p * (1 - p));
    for (auto c : counts) CHECK(std::abs(double(c) - draws * p) <= 3.0 * sigma);
    // chi-square with 2 dof; 13.8 is the 0.999 quantile
    CHECK(oracle::chi_square_uniform(counts) < 13.8);
  }
  SUBCASE("subsets equiprobable") {
    Rng r(77);
    std::vector<std::size_t> counts(10, 0);  // C(5,2) pairs
    auto pair_index = [](std::size_t i, std::size_t j) {
      if (i > j) std::swap(i, j);
      std::size_t idx = 0;
      for (std::size_t a = 0; a < i; ++a) idx += 4 - a;
      return idx + (j - i - 1);
    };
    for (int i = 0; i < 20000; ++i) {
      const auto s = sample_without_replacement(5, 2, r);
      ++counts[pair_index(s[0], s[1])];
    }
    // chi-square with 9 dof; 27.9 is the 0.999 quantile
    CHECK(oracle::chi_square_uniform(counts) < 27.9);
  }
  SUBCASE("distinct with exact cardinality") {
    Rng r(5);
    for (int t = 0; t < 200; ++t) {
      const std::size_t m = 1 + r.below(20);
      const auto s = sample_without_replacement(20, m, r);
      CHECK(s.size() == m);
      CHECK(std::set<std::size_t>(s.begin(), s.end()).size() == m);
    }
  }
}

TEST_CASE("rng substreams") {
  Rng base(99);
  Rng s1 = base.substream(stream::kInit);
  Rng s2 = base.substream(stream::kInit);
  Rng s3 = base.substream(stream::kData);
  CHECK(s1.seed() == (99 ^ stream::kInit));
  const double v1 = s1.uniform();
  CHECK(v1 == s2.uniform());
  CHECK(v1 != s3.uniform());
}
