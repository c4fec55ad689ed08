#include "fedclust/model.hpp"

#include <string>

namespace fedclust {

namespace {

void check_shapes(const Matrix& w, const Matrix& h, const DataShard& shard) {
  if (w.rows() != shard.x.rows() || w.cols() != h.rows() || h.cols() != shard.x.cols()) {
    throw DimensionError("shape mismatch: W is " + std::to_string(w.rows()) + "x" +
                         std::to_string(w.cols()) + ", H is " + std::to_string(h.rows()) +
                         "x" + std::to_string(h.cols()) + ", X is " +
                         std::to_string(shard.x.rows()) + "x" +
                         std::to_string(shard.x.cols()));
  }
}

void check_penalties(double rho, double nu) {
  if (rho < 0.0 || nu < 0.0) throw std::invalid_argument("penalties must be nonnegative");
}

}  // namespace

Problem make_problem(std::vector<DataShard> shards, Index k, double rho, double nu,
                     HConstraint constraint) {
  if (shards.empty()) throw DimensionError("problem needs at least one shard");
  Problem p;
  p.m = shards.front().x.rows();
  p.k = k;
  p.rho = rho;
  p.nu = nu;
  p.h_constraint = constraint;
  p.w_lo = std::numeric_limits<double>::infinity();
  p.w_hi = -std::numeric_limits<double>::infinity();
  for (const auto& s : shards) {
    if (s.x.rows() != p.m) throw DimensionError("shards disagree on feature dimension");
    if (s.x.cols() < 1) throw DimensionError("empty shard");
    p.n += s.x.cols();
    p.w_lo = std::min(p.w_lo, s.x.minCoeff());
    p.w_hi = std::max(p.w_hi, s.x.maxCoeff());
  }
  for (auto& s : shards) s.omega = double(s.x.cols()) / double(p.n);
  p.shards = std::move(shards);
  return p;
}

Problem merge_shards(const Problem& problem) {
  Problem merged = problem;
  DataShard all;
  all.x.resize(problem.m, problem.n);
  bool labelled = true;
  Index col = 0;
  for (const auto& s : problem.shards) {
    all.x.middleCols(col, s.x.cols()) = s.x;
    col += s.x.cols();
    labelled = labelled && s.has_labels();
  }
  if (labelled) {
    for (const auto& s : problem.shards) all.labels.insert(all.labels.end(), s.labels.begin(), s.labels.end());
  }
  all.omega = 1.0;
  merged.shards = {std::move(all)};
  return merged;
}

void validate_problem(const Problem& problem) {
  if (problem.shards.empty()) throw DimensionError("problem has no shards");
  if (problem.k < 1) throw DimensionError("cluster count must be positive");
  if (problem.w_lo > problem.w_hi) throw std::invalid_argument("w_lo exceeds w_hi");
  check_penalties(problem.rho, problem.nu);
  Index total = 0;
  double weight = 0.0;
  for (const auto& s : problem.shards) {
    if (s.x.rows() != problem.m) throw DimensionError("shard feature dimension mismatch");
    if (s.x.cols() < 1) throw DimensionError("empty shard");
    if (s.has_labels() && Index(s.labels.size()) != s.x.cols()) {
      throw DimensionError("label count does not match shard size");
    }
    total += s.x.cols();
    weight += s.omega;
  }
  if (total != problem.n) throw DimensionError("shard sizes do not sum to N");
  if (std::abs(weight - 1.0) > 1e-12) throw DimensionError("shard weights do not sum to 1");
}

Matrix FactorState::stacked_h() const {
  Index cols = 0;
  for (const auto& hp : h) cols += hp.cols();
  Matrix out(h.empty() ? 0 : h.front().rows(), cols);
  Index at = 0;
  for (const auto& hp : h) {
    out.middleCols(at, hp.cols()) = hp;
    at += hp.cols();
  }
  return out;
}

Matrix project_h(const Matrix& h, HConstraint constraint) {
  return constraint == HConstraint::Nonneg ? project_nonneg(h) : project_simplex_columns(h);
}

bool is_feasible_h(const Matrix& h, HConstraint constraint, double tol) {
  if (h.size() > 0 && h.minCoeff() < -tol) return false;
  if (constraint == HConstraint::Simplex) {
    for (Index j = 0; j < h.cols(); ++j) {
      if (std::abs(h.col(j).sum() - 1.0) > std::max(tol, 1e-12)) return false;
    }
  }
  return true;
}

double reg_h(const Matrix& h, double rho, double nu) {
  check_penalties(rho, nu);
  // (1^T h)^2 - |h|^2 summed as h_i (1^T h - h_i); the direct difference
  // loses every digit once rho is large and columns are nearly one-hot.
  const Matrix others = h.colwise().sum().replicate(h.rows(), 1) - h;
  return 0.5 * rho * (h.array() * others.array()).sum() + 0.5 * nu * h.squaredNorm();
}

Matrix reg_h_gradient(const Matrix& h, double rho, double nu) {
  check_penalties(rho, nu);
  // rho (1 1^T - I) H + nu H
  Matrix g = (nu - rho) * h;
  g.rowwise() += rho * h.colwise().sum();
  return g;
}

double objective_local(const Matrix& w, const Matrix& h, const DataShard& shard, double rho,
                       double nu) {
  check_shapes(w, h, shard);
  const double fit = (shard.x - w * h).squaredNorm() / double(shard.samples());
  return fit + reg_h(h, rho, nu) / shard.omega;
}

double objective_global(const FactorState& state, const Problem& problem) {
  if (state.h.size() != problem.shards.size()) {
    throw DimensionError("state and problem disagree on client count");
  }
  double total = 0.0;
  for (std::size_t p = 0; p < problem.shards.size(); ++p) {
    const auto& shard = problem.shards[p];
    total += shard.omega * objective_local(state.w, state.h[p], shard, problem.rho, problem.nu);
  }
  return total;
}

Matrix grad_h_local(const Matrix& w, const Matrix& h, const DataShard& shard, double rho,
                    double nu) {
  check_shapes(w, h, shard);
  const Matrix wtw = w.transpose() * w;
  Matrix g = (2.0 / double(shard.samples())) * (wtw * h - w.transpose() * shard.x);
  g += reg_h_gradient(h, rho, nu) / shard.omega;
  return g;
}

Matrix grad_w_local(const Matrix& w, const Matrix& h, const DataShard& shard) {
  check_shapes(w, h, shard);
  return (2.0 / double(shard.samples())) * (w * (h * h.transpose()) - shard.x * h.transpose());
}

Matrix grad_w(const Matrix& w, const std::vector<Matrix>& h, const Problem& problem) {
  if (h.size() != problem.shards.size()) throw DimensionError("H list size mismatch");
  Matrix hht = Matrix::Zero(problem.k, problem.k);
  Matrix xht = Matrix::Zero(problem.m, problem.k);
  for (std::size_t p = 0; p < h.size(); ++p) {
    check_shapes(w, h[p], problem.shards[p]);
    hht.noalias() += h[p] * h[p].transpose();
    xht.noalias() += problem.shards[p].x * h[p].transpose();
  }
  const Matrix grad_reg_w = Matrix::Zero(w.rows(), w.cols());
  return (2.0 / double(problem.n)) * (w * hht - xht) + grad_reg_w;
}

bool step_rule_needs_gamma(StepRuleH rule) { return rule == StepRuleH::TheoremGamma; }

bool step_rule_needs_gamma(StepRuleW rule) {
  return rule == StepRuleW::ConstantT2 || rule == StepRuleW::HalfGammaT3;
}

double lipschitz_h(double lambda_wtw, Index samples, double omega, Index k, double rho,
                   double nu) {
  return (2.0 / double(samples)) * lambda_wtw + (rho * double(k - 1) + nu) / omega;
}

double lipschitz_w(double lambda_hht, Index n) { return (2.0 / double(n)) * lambda_hht; }

double step_h(double lambda_wtw, Index samples, double omega, Index k, StepRuleH rule,
              double gamma, double rho, double nu) {
  switch (rule) {
    case StepRuleH::PracticalV:
      return 0.5 * lambda_wtw;
    case StepRuleH::TheoremGamma:
      if (!(gamma > 1.0)) throw std::invalid_argument("TheoremGamma step rule needs gamma > 1");
      return 0.5 * gamma * lipschitz_h(lambda_wtw, samples, omega, k, rho, nu);
  }
  throw std::invalid_argument("unknown H step rule");
}

double step_h(const Matrix& w, const DataShard& shard, Index k, StepRuleH rule, double gamma,
              double rho, double nu) {
  const Matrix wtw = w.transpose() * w;
  return step_h(lambda_max_psd(wtw), shard.samples(), shard.omega, k, rule, gamma, rho, nu);
}

double step_w(double lambda_hht, Index n, int round, StepRuleW rule, double gamma) {
  if (round < 1) throw std::invalid_argument("round index starts at 1");
  if (step_rule_needs_gamma(rule) && !(gamma > 1.0)) {
    throw std::invalid_argument("theorem W step rule needs gamma > 1");
  }
  const double lw = lipschitz_w(lambda_hht, n);
  switch (rule) {
    case StepRuleW::PracticalAvg: return lambda_hht;
    case StepRuleW::PracticalGds: return 0.5 * lambda_hht;
    case StepRuleW::DiminishingT1: return double(round + 1) * lw;
    case StepRuleW::ConstantT2: return gamma * lw;
    case StepRuleW::HalfGammaT3: return 0.5 * gamma * lw;
  }
  throw std::invalid_argument("unknown W step rule");
}

Matrix gram_hht(const std::vector<Matrix>& h) {
  if (h.empty()) return Matrix();
  Matrix g = Matrix::Zero(h.front().rows(), h.front().rows());
  for (const auto& hp : h) g.noalias() += hp * hp.transpose();
  return g;
}

double step_w(const std::vector<Matrix>& h, int round, StepRuleW rule, double gamma, Index n) {
  return step_w(lambda_max_psd(gram_hht(h)), n, round, rule, gamma);
}

}  // namespace fedclust
