#include <doctest.h>

#include "fedclust/metrics.hpp"
#include "oracles.hpp"

using namespace fedclust;

TEST_CASE("epsilon") {
  CHECK(epsilon(2.0, 1.0) == 0.5);
  CHECK(epsilon(3.0, 3.0) == 0.0);
  Rng rng(1);
  for (int t = 0; t < 100; ++t) {
    const double a = rng.uniform(1e-3, 10.0), b = rng.uniform(1e-3, 10.0);
    CHECK(epsilon(a, b) == doctest::Approx(std::abs(b - a) / a).epsilon(1e-15));
  }
  CHECK_THROWS_AS(epsilon(0.0, 1.0), UndefinedStatistic);
  CHECK_THROWS_AS(epsilon(-1.0, 1.0), UndefinedStatistic);
}

TEST_CASE("assign_labels") {
  Matrix onehot = Matrix::Zero(3, 4);
  onehot(2, 0) = onehot(0, 1) = onehot(1, 2) = onehot(2, 3) = 1.0;
  CHECK(assign_labels(onehot) == std::vector<int>{2, 0, 1, 2});

  Matrix tie(2, 1);
  tie << 0.3, 0.3;
  CHECK(assign_labels(tie) == std::vector<int>{0});

  Rng rng(2);
  Matrix h(5, 50);
  for (Index i = 0; i < h.size(); ++i) h.data()[i] = double(rng.below(4));  // frequent ties
  const auto got = assign_labels(h);
  for (Index j = 0; j < h.cols(); ++j) {
    int best = 0;
    for (Index i = 1; i < h.rows(); ++i)
      if (h(i, j) > h(best, j)) best = int(i);
    CHECK(got[std::size_t(j)] == best);
  }
}

TEST_CASE("hungarian_min matches exhaustive search") {
  Rng rng(3);
  for (int k = 1; k <= 6; ++k) {
    for (int t = 0; t < 20; ++t) {
      Matrix c(k, k);
      for (Index i = 0; i < c.size(); ++i) c.data()[i] = double(rng.below(10));
      const auto assign = hungarian_min(c);
      double got = 0.0;
      for (int r = 0; r < k; ++r) got += c(r, assign[std::size_t(r)]);
      std::vector<int> perm(static_cast<std::size_t>(k));
      std::iota(perm.begin(), perm.end(), 0);
      double best = INFINITY;
      do {
        double s = 0.0;
        for (int r = 0; r < k; ++r) s += c(r, perm[std::size_t(r)]);
        best = std::min(best, s);
      } while (std::next_permutation(perm.begin(), perm.end()));
      CHECK(got == best);
    }
  }
}

TEST_CASE("clustering_accuracy") {
  const std::vector<int> truth{0, 1, 2, 0, 1, 2, 2, 1};
  CHECK(clustering_accuracy(truth, truth, 3) == 1.0);
  std::vector<int> relabeled;
  for (int t : truth) relabeled.push_back((t + 1) % 3);
  CHECK(clustering_accuracy(relabeled, truth, 3) == 1.0);

  Rng rng(4);
  for (int trial = 0; trial < 50; ++trial) {
    std::vector<int> pred(20), tr(20);
    for (auto& p : pred) p = int(rng.below(4));
    for (auto& t : tr) t = int(rng.below(4));
    const double want = oracle::brute_force_accuracy(pred, tr, 4);
    CHECK(clustering_accuracy(pred, tr, 4) == doctest::Approx(want).epsilon(1e-15));
  }

  SUBCASE("invariant to relabeling either side") {
    for (int trial = 0; trial < 20; ++trial) {
      std::vector<int> pred(30), tr(30);
      for (auto& p : pred) p = int(rng.below(5));
      for (auto& t : tr) t = int(rng.below(5));
      std::vector<int> perm{3, 0, 4, 1, 2};
      std::vector<int> pp, tp;
      for (int p : pred) pp.push_back(perm[std::size_t(p)]);
      for (int t : tr) tp.push_back(perm[std::size_t(4 - t)]);
      const double base = clustering_accuracy(pred, tr, 5);
      CHECK(clustering_accuracy(pp, tr, 5) == base);
      CHECK(clustering_accuracy(pred, tp, 5) == base);
    }
  }
  SUBCASE("random predictions score at least 1/K on average") {
    double sum = 0.0;
    const int trials = 200;
    for (int trial = 0; trial < trials; ++trial) {
      std::vector<int> pred(100), tr(100);
      for (auto& p : pred) p = int(rng.below(4));
      for (auto& t : tr) t = int(rng.below(4));
      sum += clustering_accuracy(pred, tr, 4);
    }
    CHECK(sum / trials >= 0.25);
  }

  const std::vector<int> bad{0, 3};
  const std::vector<int> ok{0, 1};
  CHECK_THROWS_AS(clustering_accuracy(bad, ok, 3), std::out_of_range);
  CHECK_THROWS_AS(clustering_accuracy(std::vector<int>{-1, 0}, ok, 3), std::out_of_range);
  CHECK_THROWS_AS(clustering_accuracy(ok, std::vector<int>{0}, 3), DimensionError);
}
