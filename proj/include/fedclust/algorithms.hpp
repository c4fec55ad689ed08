#ifndef FEDCLUST_ALGORITHMS_HPP
#define FEDCLUST_ALGORITHMS_HPP

#include "fedclust/fedruntime.hpp"
#include "fedclust/metrics.hpp"
#include "fedclust/model.hpp"

#include <chrono>
#include <functional>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace fedclust {

struct FedConfig {
  double gamma = 2.0;
  int q1 = 1;
  int q2 = 1;
  /// When set, the W epoch count in round s is floor(q2_schedule / s) + 1.
  std::optional<double> q2_schedule;
  /// Active clients per round; 0 means all clients.
  std::size_t m = 0;
  int max_rounds = 100;
  double eps_stop = 1e-6;
  StepRuleH step_rule_h = StepRuleH::PracticalV;
  StepRuleW step_rule_w = StepRuleW::PracticalGds;
  std::uint64_t seed = 0;

  int q2_for(int round) const;
};

/// Every violation of `config` for the given solver and client count.
std::vector<std::string> config_violations(const FedConfig& config, SolverKind kind,
                                           std::size_t clients);
/// Throws std::invalid_argument listing all violations, if any.
void validate_config(const FedConfig& config, SolverKind kind, std::size_t clients);

/// W entries uniform in [w_lo, w_hi]; H_p entries uniform in [0, 1) and then
/// made feasible. Depends only on the problem shape and the seed.
FactorState initial_state(const Problem& problem, std::uint64_t seed);

/// Optional observers used by tests and diagnostics. None of them can alter
/// the iterates.
struct SolverHooks {
  /// FedCGds, before each server W epoch: current W, the gradient the
  /// server rebuilt from its accumulators, and every client's current H.
  std::function<void(int round, int epoch, const Matrix& w, const Matrix& server_gradient,
                     const std::vector<Matrix>& h)>
      on_server_epoch;
  /// FedCAvg, after each local W epoch of a client.
  std::function<void(int round, std::size_t client, int epoch, const Matrix& w_local,
                     const Matrix& gradient)>
      on_local_w_epoch;
  /// FedCAvg, the instantaneous averaged model for every W epoch of a round.
  std::function<void(int round, const std::vector<Matrix>& averaged)> on_averaged_models;
  /// Any solver, after each round.
  std::function<void(const RoundTrace& trace, const FactorState& state)> on_round;
  /// FedCGds, per active client after its H epochs: (U_p, H_p^{s,Q1}).
  std::function<void(int round, std::size_t client, const Matrix& u, const Matrix& h)>
      on_upload;
};

/// A solver advanced one round at a time. Objective, epsilon and accuracy in
/// the traces are computed from a metrics-only view of the full state and
/// never feed back into the iterates.
class RoundSolver {
 public:
  RoundSolver(Problem problem, FedConfig config, FactorState init, SolverHooks hooks);
  virtual ~RoundSolver() = default;

  RoundSolver(const RoundSolver&) = delete;
  RoundSolver& operator=(const RoundSolver&) = delete;

  RoundTrace step();
  /// Steps until epsilon < eps_stop, the round budget is exhausted, or the
  /// objective reaches zero.
  std::vector<RoundTrace> run();

  /// Current iterate. For model averaging W is the projected weighted
  /// average of the local models.
  virtual FactorState state() const = 0;
  virtual SolverKind kind() const = 0;
  virtual std::uint64_t uplink_total() const = 0;

  /// Changes the orthogonality penalty; the next epsilon is undefined.
  void set_rho(double rho);

  const Problem& problem() const { return problem_; }
  const FedConfig& config() const { return config_; }
  int rounds_done() const { return round_; }
  double current_objective() const;
  bool finished() const { return finished_; }

 protected:
  /// Executes round s and returns its descent-measure contribution.
  virtual double advance(int round) = 0;

  Problem problem_;
  FedConfig config_;
  SolverHooks hooks_;

 private:
  int round_ = 0;
  std::optional<double> prev_objective_;
  bool finished_ = false;
  std::vector<int> truth_;
  std::chrono::steady_clock::time_point start_;
};

std::unique_ptr<RoundSolver> make_solver(SolverKind kind, const Problem& problem,
                                         const FedConfig& config,
                                         std::optional<FactorState> init = std::nullopt,
                                         SolverHooks hooks = {});

struct RunResult {
  FactorState state;
  std::vector<RoundTrace> trace;
  double initial_objective = 0.0;
};

RunResult run_fedcavg(const Problem& problem, const FedConfig& config, SolverHooks hooks = {},
                      std::optional<FactorState> init = std::nullopt);
RunResult run_fedcgds(const Problem& problem, const FedConfig& config, SolverHooks hooks = {},
                      std::optional<FactorState> init = std::nullopt);
RunResult run_fedcpalm(const Problem& problem, const FedConfig& config, SolverHooks hooks = {},
                       std::optional<FactorState> init = std::nullopt);
/// Centralized PALM on the concatenated data. The returned state has a
/// single H block covering all samples in shard order.
RunResult run_palm_centralized(const Problem& problem, const FedConfig& config,
                               SolverHooks hooks = {},
                               std::optional<FactorState> init = std::nullopt);

// K-means++ -----------------------------------------------------------------

struct KMeansResult {
  Matrix centroids;              // M x K
  std::vector<int> labels;
  double cost = 0.0;             // within-cluster sum of squares
  std::vector<double> cost_history;  // cost after each Lloyd iteration
  int iterations = 0;
};

/// D^2-weighted seeding followed by Lloyd iterations until the assignment
/// stops changing or `max_iters` is reached. Columns of `x` are samples.
KMeansResult run_kmeanspp(const Matrix& x, int k, Rng& rng, int max_iters = 300);

// SNCP ----------------------------------------------------------------------

struct SncpSchedule {
  double rho0 = 1e-8;
  double factor = 1.5;
  double trigger_eps = 2e-5;
  double final_eps = 1e-8;
  double nu = 1e-10;
  int max_stages = 200;
};

std::vector<std::string> schedule_violations(const SncpSchedule& schedule);

struct SncpResult {
  FactorState state;
  /// Rounds are numbered cumulatively across stages.
  std::vector<RoundTrace> trace;
  std::vector<double> rho_history;
  int stages = 0;
  std::uint64_t uplink_total = 0;
};

/// Repeats inner solves with an increasing orthogonality penalty. A stage
/// ends when epsilon < trigger_eps or `config.max_rounds` stage rounds have
/// run; the loop halts once a stage ends with epsilon < final_eps or after
/// `max_stages` stages, and otherwise multiplies rho by `factor`.
SncpResult run_sncp(const Problem& problem, SolverKind inner, const SncpSchedule& schedule,
                    const FedConfig& config, SolverHooks hooks = {},
                    std::optional<FactorState> init = std::nullopt);

}  // namespace fedclust

#endif  // FEDCLUST_ALGORITHMS_HPP
