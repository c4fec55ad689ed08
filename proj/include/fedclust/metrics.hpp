#ifndef FEDCLUST_METRICS_HPP
#define FEDCLUST_METRICS_HPP

#include "fedclust/linalg.hpp"

#include <cstdint>
#include <optional>
#include <span>
#include <stdexcept>
#include <vector>

namespace fedclust {

struct RoundTrace {
  int round = 0;
  double objective = 0.0;
  double epsilon = std::numeric_limits<double>::infinity();
  std::uint64_t uplink_cost = 0;  // cumulative
  std::size_t active = 0;
  double wall_time = 0.0;         // seconds since the solver started
  std::optional<double> accuracy;
  /// This round's contribution to the algorithm's averaged descent measure.
  double descent = 0.0;
  double rho = 0.0;
};

class UndefinedStatistic : public std::domain_error {
 public:
  using std::domain_error::domain_error;
};

/// Normalized absolute change |F_cur - F_prev| / F_prev.
double epsilon(double f_prev, double f_cur);

/// Per column, the row index of the largest entry; ties go to the lowest index.
std::vector<int> assign_labels(const Matrix& h);

/// Optimal assignment for a square cost matrix (minimization).
/// Returns, for each row, the column it is matched to.
std::vector<int> hungarian_min(const Matrix& cost);

/// Fraction of samples whose predicted cluster matches the truth under the
/// best one-to-one relabeling of predicted clusters. Labels are 0-based in
/// [0, k).
double clustering_accuracy(std::span<const int> pred, std::span<const int> truth, int k);

}  // namespace fedclust

#endif  // FEDCLUST_METRICS_HPP
