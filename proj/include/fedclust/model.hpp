#ifndef FEDCLUST_MODEL_HPP
#define FEDCLUST_MODEL_HPP

#include "fedclust/linalg.hpp"

#include <optional>
#include <vector>

namespace fedclust {

enum class HConstraint { Nonneg, Simplex };

/// One client's private data block.
struct DataShard {
  Matrix x;                       // M x N_p
  double omega = 1.0;             // N_p / N
  std::vector<int> labels;        // optional ground truth, 0-based; empty if unknown

  Index samples() const { return x.cols(); }
  bool has_labels() const { return !labels.empty(); }
};

struct Problem {
  Index m = 0;  // feature dimension
  Index n = 0;  // total samples
  Index k = 0;  // clusters
  std::vector<DataShard> shards;
  double rho = 1e-8;
  double nu = 1e-10;
  double w_lo = 0.0;
  double w_hi = 1.0;
  HConstraint h_constraint = HConstraint::Nonneg;

  std::size_t clients() const { return shards.size(); }
};

/// Builds a problem from shard matrices. Weights are N_p / N and the box
/// bounds default to the extreme entries of the data.
Problem make_problem(std::vector<DataShard> shards, Index k, double rho = 1e-8,
                     double nu = 1e-10, HConstraint constraint = HConstraint::Nonneg);

/// Concatenates all shards into a single shard with weight 1.
Problem merge_shards(const Problem& problem);

/// Throws DimensionError unless weights and sizes are consistent.
void validate_problem(const Problem& problem);

struct FactorState {
  Matrix w;                // M x K centroids
  std::vector<Matrix> h;   // K x N_p assignments, one per shard

  Matrix stacked_h() const;
};

Matrix project_h(const Matrix& h, HConstraint constraint);
bool is_feasible_h(const Matrix& h, HConstraint constraint, double tol = 0.0);

// Objective and gradients ---------------------------------------------------

double reg_h(const Matrix& h, double rho, double nu);
Matrix reg_h_gradient(const Matrix& h, double rho, double nu);

double objective_local(const Matrix& w, const Matrix& h, const DataShard& shard,
                       double rho, double nu);
double objective_global(const FactorState& state, const Problem& problem);

Matrix grad_h_local(const Matrix& w, const Matrix& h, const DataShard& shard,
                    double rho, double nu);

/// Gradient of F_p with respect to W, (2/N_p)(W H_p H_p^T - X_p H_p^T).
Matrix grad_w_local(const Matrix& w, const Matrix& h, const DataShard& shard);

/// Gradient of the global objective with respect to W. The centroid
/// regularizer is identically zero, so its slot contributes nothing.
Matrix grad_w(const Matrix& w, const std::vector<Matrix>& h, const Problem& problem);

// Step sizes ----------------------------------------------------------------

enum class StepRuleH {
  PracticalV,    // c = lambda_max(W^T W) / 2
  TheoremGamma,  // c = (gamma/2) L_H
};

enum class StepRuleW {
  PracticalAvg,   // d = lambda_max(H H^T)
  PracticalGds,   // d = lambda_max(H H^T) / 2
  DiminishingT1,  // d = (s+1) L_W
  ConstantT2,     // d = gamma L_W
  HalfGammaT3,    // d = (gamma/2) L_W
};

bool step_rule_needs_gamma(StepRuleH rule);
bool step_rule_needs_gamma(StepRuleW rule);

/// Lipschitz constant of grad_H F_p given lambda_max(W^T W).
double lipschitz_h(double lambda_wtw, Index samples, double omega, Index k, double rho,
                   double nu);
/// Lipschitz constant of grad_W F given lambda_max(H H^T) of the stacked H.
double lipschitz_w(double lambda_hht, Index n);

double step_h(double lambda_wtw, Index samples, double omega, Index k, StepRuleH rule,
              double gamma, double rho, double nu);
double step_h(const Matrix& w, const DataShard& shard, Index k, StepRuleH rule,
              double gamma, double rho, double nu);

double step_w(double lambda_hht, Index n, int round, StepRuleW rule, double gamma);
double step_w(const std::vector<Matrix>& h, int round, StepRuleW rule, double gamma,
              Index n);

/// Sum of H_p H_p^T over all shards (K x K).
Matrix gram_hht(const std::vector<Matrix>& h);

}  // namespace fedclust

#endif  // FEDCLUST_MODEL_HPP
