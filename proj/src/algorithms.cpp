#include "fedclust/algorithms.hpp"

#include <cmath>
#include <sstream>

namespace fedclust {

int FedConfig::q2_for(int round) const {
  if (q2_schedule) return int(std::floor(*q2_schedule / double(round))) + 1;
  return q2;
}

std::vector<std::string> config_violations(const FedConfig& config, SolverKind kind,
                                           std::size_t clients) {
  std::vector<std::string> out;
  if (config.q1 < 1) out.emplace_back("Q1 must be at least 1");
  if (!config.q2_schedule && config.q2 < 1) out.emplace_back("Q2 must be at least 1");
  if (config.q2_schedule && !(*config.q2_schedule > 0.0)) {
    out.emplace_back("Q2 schedule constant must be positive");
  }
  if (config.max_rounds < 1) out.emplace_back("round budget must be at least 1");
  if (!(config.eps_stop > 0.0)) out.emplace_back("stopping threshold must be positive");
  const bool gamma_used = step_rule_needs_gamma(config.step_rule_h) ||
                          step_rule_needs_gamma(config.step_rule_w) ||
                          config.step_rule_h == StepRuleH::TheoremGamma;
  if (gamma_used && !(config.gamma > 1.0)) {
    out.emplace_back("gamma must exceed 1 for theorem step rules");
  }
  if (config.m > clients) out.emplace_back("participation exceeds client count");
  if (kind == SolverKind::FedCAvg || kind == SolverKind::FedCPALM) {
    if (config.m != 0 && config.m != clients) {
      out.emplace_back("model averaging requires full participation (m = P)");
    }
  }
  if (kind == SolverKind::FedCPALM) {
    if (config.q2_schedule) out.emplace_back("FedCPALM does not support a Q2 schedule");
    if ((config.q1 + config.q2) % 2 != 0) out.emplace_back("FedCPALM needs an even Q = Q1 + Q2");
  }
  return out;
}

void validate_config(const FedConfig& config, SolverKind kind, std::size_t clients) {
  const auto violations = config_violations(config, kind, clients);
  if (violations.empty()) return;
  std::ostringstream msg;
  msg << "invalid configuration for " << to_string(kind) << ":";
  for (const auto& v : violations) msg << " " << v << ";";
  throw std::invalid_argument(msg.str());
}

FactorState initial_state(const Problem& problem, std::uint64_t seed) {
  Rng rng = Rng(seed).substream(stream::kInit);
  FactorState st;
  st.w.resize(problem.m, problem.k);
  for (Index j = 0; j < st.w.cols(); ++j) {
    for (Index i = 0; i < st.w.rows(); ++i) st.w(i, j) = rng.uniform(problem.w_lo, problem.w_hi);
  }
  if (problem.w_lo == problem.w_hi) st.w.setConstant(problem.w_lo);
  st.h.reserve(problem.shards.size());
  for (const auto& shard : problem.shards) {
    Matrix h(problem.k, shard.samples());
    for (Index j = 0; j < h.cols(); ++j) {
      for (Index i = 0; i < h.rows(); ++i) h(i, j) = rng.uniform();
    }
    st.h.push_back(project_h(h, problem.h_constraint));
  }
  return st;
}

// RoundSolver ---------------------------------------------------------------

RoundSolver::RoundSolver(Problem problem, FedConfig config, FactorState init,
                         SolverHooks hooks)
    : problem_(std::move(problem)), config_(std::move(config)), hooks_(std::move(hooks)) {
  validate_problem(problem_);
  bool labelled = true;
  for (const auto& s : problem_.shards) labelled = labelled && s.has_labels();
  if (labelled) {
    for (const auto& s : problem_.shards) truth_.insert(truth_.end(), s.labels.begin(), s.labels.end());
  }
  if (init.w.rows() != problem_.m || init.w.cols() != problem_.k ||
      init.h.size() != problem_.shards.size()) {
    throw DimensionError("initial state does not match the problem");
  }
  start_ = std::chrono::steady_clock::now();
}

void RoundSolver::set_rho(double rho) {
  if (rho < 0.0) throw std::invalid_argument("rho must be nonnegative");
  problem_.rho = rho;
  prev_objective_.reset();
  finished_ = false;
}

double RoundSolver::current_objective() const { return objective_global(state(), problem_); }

RoundTrace RoundSolver::step() {
  const int s = ++round_;
  const double descent = advance(s);
  const FactorState st = state();

  RoundTrace t;
  t.round = s;
  t.objective = objective_global(st, problem_);
  if (prev_objective_ && *prev_objective_ > 0.0) t.epsilon = epsilon(*prev_objective_, t.objective);
  prev_objective_ = t.objective;
  t.uplink_cost = uplink_total();
  t.active = config_.m == 0 ? problem_.clients() : config_.m;
  if (kind() == SolverKind::PALM) t.active = 0;
  t.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - start_).count();
  if (!truth_.empty()) {
    const auto pred = assign_labels(st.stacked_h());
    t.accuracy = clustering_accuracy(pred, truth_, int(problem_.k));
  }
  t.descent = descent;
  t.rho = problem_.rho;

  if (t.epsilon < config_.eps_stop || s >= config_.max_rounds || t.objective <= 0.0) {
    finished_ = true;
  }
  if (hooks_.on_round) hooks_.on_round(t, st);
  return t;
}

std::vector<RoundTrace> RoundSolver::run() {
  std::vector<RoundTrace> trace;
  if (current_objective() <= 0.0) finished_ = true;
  while (!finished_) trace.push_back(step());
  return trace;
}

namespace {

Matrix weighted_average(const std::vector<Matrix>& models, const Problem& problem) {
  Matrix avg = Matrix::Zero(problem.m, problem.k);
  for (std::size_t p = 0; p < models.size(); ++p) avg += problem.shards[p].omega * models[p];
  return avg;
}

std::vector<std::size_t> all_clients(std::size_t n) {
  std::vector<std::size_t> v(n);
  std::iota(v.begin(), v.end(), std::size_t{0});
  return v;
}

/// Q1 projected gradient steps on one client's H with W held fixed.
/// Returns the sum of ||H^t - H^{t-1}||^2 over the epochs.
double local_h_epochs(Matrix& h, const Matrix& w, const DataShard& shard, const Problem& problem,
                      double c, int epochs) {
  double moved = 0.0;
  for (int t = 0; t < epochs; ++t) {
    Matrix next = project_h(h - grad_h_local(w, h, shard, problem.rho, problem.nu) / c,
                            problem.h_constraint);
    moved += (next - h).squaredNorm();
    h = std::move(next);
  }
  return moved;
}

// FedCAvg -------------------------------------------------------------------

class FedCAvgSolver final : public RoundSolver {
 public:
  FedCAvgSolver(const Problem& problem, const FedConfig& config, FactorState init,
                SolverHooks hooks)
      : RoundSolver(problem, config, init, std::move(hooks)), runtime_(problem.clients()) {
    validate_config(config_, SolverKind::FedCAvg, problem_.clients());
    w_local_.assign(problem_.clients(), init.w);
    h_ = std::move(init.h);
  }

  FactorState state() const override {
    return {project_box(weighted_average(w_local_, problem_), problem_.w_lo, problem_.w_hi), h_};
  }
  SolverKind kind() const override { return SolverKind::FedCAvg; }
  std::uint64_t uplink_total() const override { return runtime_.meter().uplink_total(); }

 protected:
  double advance(int s) override {
    const Problem& pb = problem_;
    const int q1 = config_.q1;
    const int q2 = config_.q2_for(s);
    const Matrix w_round =
        project_box(weighted_average(w_local_, pb), pb.w_lo, pb.w_hi);

    std::vector<Matrix> averaged(std::size_t(q2), Matrix::Zero(pb.m, pb.k));
    double descent_h = 0.0;
    double d = 0.0;
    double lw = 0.0;

    RoundPlan plan;
    plan.broadcast = Message{std::uint32_t(s), kServerId, BroadcastW{w_round}};
    plan.phases = 2;
    plan.client_compute = [&](int phase, std::size_t p, const Message* msg) {
      const DataShard& shard = pb.shards[p];
      if (phase == 0) {
        w_local_[p] = std::get<BroadcastW>(msg->payload).w;
        const double lambda = lambda_max_psd(Matrix(w_local_[p].transpose() * w_local_[p]));
        const double c = step_h(lambda, shard.samples(), shard.omega, pb.k, config_.step_rule_h,
                                config_.gamma, pb.rho, pb.nu);
        const double lh = lipschitz_h(lambda, shard.samples(), shard.omega, pb.k, pb.rho, pb.nu);
        descent_h += shard.omega * lh * local_h_epochs(h_[p], w_local_[p], shard, pb, c, q1);
        return;
      }
      Matrix& w = w_local_[p];
      for (int t = 1; t <= q2; ++t) {
        const Matrix g = grad_w_local(w, h_[p], shard);
        w -= g / d;
        averaged[std::size_t(t - 1)] += shard.omega * w;
        if (hooks_.on_local_w_epoch) hooks_.on_local_w_epoch(s, p, q1 + t, w, g);
      }
    };
    plan.barrier = [&](int phase) {
      if (phase != 0) return;
      const double lambda = lambda_max_psd(gram_hht(h_));
      d = step_w(lambda, pb.n, s, config_.step_rule_w, config_.gamma);
      lw = lipschitz_w(lambda, pb.n);
    };
    plan.client_upload = [&](std::size_t p) {
      return Message{std::uint32_t(s), std::uint32_t(p), UploadW{w_local_[p]}};
    };
    plan.expected_upload = {2, pb.m, pb.k};
    plan.server_step = [&](const std::vector<Message>& uploads) {
      for (const auto& up : uploads) w_local_[up.sender] = std::get<UploadW>(up.payload).w;
    };
    runtime_.run_round(std::uint32_t(s), all_clients(pb.clients()), plan);

    for (auto& a : averaged) a = project_box(a, pb.w_lo, pb.w_hi);
    double descent_w = 0.0;
    const Matrix* prev = &w_round;
    for (const auto& a : averaged) {
      descent_w += (a - *prev).squaredNorm();
      prev = &a;
    }
    if (hooks_.on_averaged_models) hooks_.on_averaged_models(s, averaged);
    return 0.5 * (config_.gamma - 1.0) * descent_h + 0.5 * lw * descent_w;
  }

 private:
  Runtime runtime_;
  std::vector<Matrix> w_local_;
  std::vector<Matrix> h_;
};

// FedCGds -------------------------------------------------------------------

class FedCGdsSolver final : public RoundSolver {
 public:
  FedCGdsSolver(const Problem& problem, const FedConfig& config, FactorState init,
                SolverHooks hooks)
      : RoundSolver(problem, config, init, std::move(hooks)),
        runtime_(problem.clients()),
        sampler_(Rng(config.seed).substream(stream::kSampling)) {
    validate_config(config_, SolverKind::FedCGds, problem_.clients());
    if (config_.m == 0) config_.m = problem_.clients();
    w_ = project_box(init.w, problem_.w_lo, problem_.w_hi);
    h_ = std::move(init.h);
    h_start_.resize(h_.size());
    bootstrap();
  }

  FactorState state() const override { return {w_, h_}; }
  SolverKind kind() const override { return SolverKind::FedCGds; }
  std::uint64_t uplink_total() const override { return runtime_.meter().uplink_total(); }

  const Matrix& g1() const { return g1_; }
  const Matrix& g2() const { return g2_; }

 protected:
  double advance(int s) override {
    const Problem& pb = problem_;
    const int q1 = config_.q1;
    const int q2 = config_.q2_for(s);
    const double two_over_n = 2.0 / double(pb.n);

    auto active = sample_without_replacement(pb.clients(), config_.m, sampler_);
    std::sort(active.begin(), active.end());

    double descent_h = 0.0;
    double descent_w = 0.0;

    RoundPlan plan;
    plan.broadcast = Message{std::uint32_t(s), kServerId, BroadcastW{w_}};
    plan.client_compute = [&](int, std::size_t p, const Message* msg) {
      const DataShard& shard = pb.shards[p];
      const Matrix& w = std::get<BroadcastW>(msg->payload).w;
      const double lambda = lambda_max_psd(Matrix(w.transpose() * w));
      const double c = step_h(lambda, shard.samples(), shard.omega, pb.k, config_.step_rule_h,
                              config_.gamma, pb.rho, pb.nu);
      const double lh = lipschitz_h(lambda, shard.samples(), shard.omega, pb.k, pb.rho, pb.nu);
      h_start_[p] = h_[p];
      descent_h += shard.omega * lh * local_h_epochs(h_[p], w, shard, pb, c, q1);
    };
    plan.client_upload = [&](std::size_t p) {
      const Matrix& h0 = h_start_[p];
      const Matrix& h1 = h_[p];
      Matrix u = h1 * h1.transpose() - h0 * h0.transpose();
      Matrix v = pb.shards[p].x * (h1 - h0).transpose();
      if (hooks_.on_upload) hooks_.on_upload(s, p, u, h1);
      return Message{std::uint32_t(s), std::uint32_t(p), UploadDiff{std::move(u), std::move(v)}};
    };
    plan.expected_upload = {3, pb.m, pb.k};
    plan.server_step = [&](const std::vector<Message>& uploads) {
      for (const auto& up : uploads) {
        const auto& diff = std::get<UploadDiff>(up.payload);
        g1_ += two_over_n * diff.u;
        g2_ += two_over_n * diff.v;
      }
      // G1 = (2/N) H H^T, so lambda_max(H H^T) = (N/2) lambda_max(G1).
      const double lambda = 0.5 * double(pb.n) * lambda_max_psd(g1_);
      const double d = step_w(lambda, pb.n, s, config_.step_rule_w, config_.gamma);
      const double lw = lipschitz_w(lambda, pb.n);
      for (int t = 1; t <= q2; ++t) {
        const Matrix grad = w_ * g1_ - g2_;
        if (hooks_.on_server_epoch) hooks_.on_server_epoch(s, q1 + t, w_, grad, h_);
        Matrix next = project_box(w_ - grad / d, pb.w_lo, pb.w_hi);
        descent_w += lw * (next - w_).squaredNorm();
        w_ = std::move(next);
      }
    };
    runtime_.run_round(std::uint32_t(s), active, plan);

    const double fraction = double(config_.m) / double(pb.clients());
    return fraction * descent_h + descent_w;
  }

 private:
  void bootstrap() {
    const Problem& pb = problem_;
    const double two_over_n = 2.0 / double(pb.n);
    g1_ = Matrix::Zero(pb.k, pb.k);
    g2_ = Matrix::Zero(pb.m, pb.k);
    RoundPlan plan;
    plan.client_upload = [&](std::size_t p) {
      const Matrix& h = h_[p];
      return Message{0, std::uint32_t(p), UploadDiff{h * h.transpose(), pb.shards[p].x * h.transpose()}};
    };
    plan.expected_upload = {3, pb.m, pb.k};
    plan.server_step = [&](const std::vector<Message>& uploads) {
      for (const auto& up : uploads) {
        const auto& diff = std::get<UploadDiff>(up.payload);
        g1_ += two_over_n * diff.u;
        g2_ += two_over_n * diff.v;
      }
    };
    runtime_.run_round(0, all_clients(pb.clients()), plan);
  }

  Runtime runtime_;
  Rng sampler_;
  Matrix w_;
  std::vector<Matrix> h_;
  std::vector<Matrix> h_start_;
  Matrix g1_;
  Matrix g2_;
};

// FedCPALM ------------------------------------------------------------------

class FedCPalmSolver final : public RoundSolver {
 public:
  FedCPalmSolver(const Problem& problem, const FedConfig& config, FactorState init,
                 SolverHooks hooks)
      : RoundSolver(problem, config, init, std::move(hooks)), runtime_(problem.clients()) {
    validate_config(config_, SolverKind::FedCPALM, problem_.clients());
    w_local_.assign(problem_.clients(), init.w);
    h_ = std::move(init.h);
  }

  FactorState state() const override {
    return {project_box(weighted_average(w_local_, problem_), problem_.w_lo, problem_.w_hi), h_};
  }
  SolverKind kind() const override { return SolverKind::FedCPALM; }
  std::uint64_t uplink_total() const override { return runtime_.meter().uplink_total(); }

 protected:
  double advance(int s) override {
    const Problem& pb = problem_;
    const int local_iters = (config_.q1 + config_.q2) / 2;
    const Matrix w_round = project_box(weighted_average(w_local_, pb), pb.w_lo, pb.w_hi);
    double d = 0.0;

    RoundPlan plan;
    plan.broadcast = Message{std::uint32_t(s), kServerId, BroadcastW{w_round}};
    plan.phases = 2 * local_iters;
    plan.client_compute = [&](int phase, std::size_t p, const Message* msg) {
      const DataShard& shard = pb.shards[p];
      Matrix& w = w_local_[p];
      if (phase == 0) w = std::get<BroadcastW>(msg->payload).w;
      if (phase % 2 == 0) {
        const double lambda = lambda_max_psd(Matrix(w.transpose() * w));
        const double c = step_h(lambda, shard.samples(), shard.omega, pb.k, config_.step_rule_h,
                                config_.gamma, pb.rho, pb.nu);
        local_h_epochs(h_[p], w, shard, pb, c, 1);
      } else {
        w = project_box(w - grad_w_local(w, h_[p], shard) / d, pb.w_lo, pb.w_hi);
      }
    };
    plan.barrier = [&](int phase) {
      if (phase % 2 != 0) return;
      d = step_w(h_, s, config_.step_rule_w, config_.gamma, pb.n);
    };
    plan.client_upload = [&](std::size_t p) {
      return Message{std::uint32_t(s), std::uint32_t(p), UploadW{w_local_[p]}};
    };
    plan.expected_upload = {2, pb.m, pb.k};
    plan.server_step = [&](const std::vector<Message>& uploads) {
      for (const auto& up : uploads) w_local_[up.sender] = std::get<UploadW>(up.payload).w;
    };
    runtime_.run_round(std::uint32_t(s), all_clients(pb.clients()), plan);
    return 0.0;
  }

 private:
  Runtime runtime_;
  std::vector<Matrix> w_local_;
  std::vector<Matrix> h_;
};

// Centralized PALM ----------------------------------------------------------

class PalmSolver final : public RoundSolver {
 public:
  PalmSolver(const Problem& merged, const FedConfig& config, FactorState init, SolverHooks hooks)
      : RoundSolver(merged, config, init, std::move(hooks)) {
    for (const auto& v : config_violations(config_, SolverKind::PALM, 1)) {
      if (v != "participation exceeds client count") throw std::invalid_argument(v);
    }
    w_ = project_box(init.w, problem_.w_lo, problem_.w_hi);
    h_ = std::move(init.h.front());
  }

  FactorState state() const override { return {w_, {h_}}; }
  SolverKind kind() const override { return SolverKind::PALM; }
  std::uint64_t uplink_total() const override { return 0; }

 protected:
  double advance(int t) override {
    const Problem& pb = problem_;
    const DataShard& all = pb.shards.front();
    const double lambda_w = lambda_max_psd(Matrix(w_.transpose() * w_));
    const double c = step_h(lambda_w, all.samples(), all.omega, pb.k, config_.step_rule_h,
                            config_.gamma, pb.rho, pb.nu);
    const double lh = lipschitz_h(lambda_w, all.samples(), all.omega, pb.k, pb.rho, pb.nu);
    const double moved_h = local_h_epochs(h_, w_, all, pb, c, 1);

    const double lambda_h = lambda_max_psd(Matrix(h_ * h_.transpose()));
    const double d = step_w(lambda_h, pb.n, t, config_.step_rule_w, config_.gamma);
    Matrix next = project_box(w_ - grad_w_local(w_, h_, all) / d, pb.w_lo, pb.w_hi);
    const double moved_w = (next - w_).squaredNorm();
    w_ = std::move(next);
    return lh * moved_h + lipschitz_w(lambda_h, pb.n) * moved_w;
  }

 private:
  Matrix w_;
  Matrix h_;
};

FactorState stack_state(const FactorState& st) { return {st.w, {st.stacked_h()}}; }

}  // namespace

std::unique_ptr<RoundSolver> make_solver(SolverKind kind, const Problem& problem,
                                         const FedConfig& config,
                                         std::optional<FactorState> init, SolverHooks hooks) {
  FactorState start = init ? std::move(*init) : initial_state(problem, config.seed);
  switch (kind) {
    case SolverKind::FedCAvg:
      return std::make_unique<FedCAvgSolver>(problem, config, std::move(start), std::move(hooks));
    case SolverKind::FedCGds:
      return std::make_unique<FedCGdsSolver>(problem, config, std::move(start), std::move(hooks));
    case SolverKind::FedCPALM:
      return std::make_unique<FedCPalmSolver>(problem, config, std::move(start), std::move(hooks));
    case SolverKind::PALM: {
      if (start.h.size() != 1) start = stack_state(start);
      return std::make_unique<PalmSolver>(merge_shards(problem), config, std::move(start),
                                          std::move(hooks));
    }
    case SolverKind::KMeansPP: break;
  }
  throw std::invalid_argument("make_solver: " + std::string(to_string(kind)) +
                              " is not a round-based solver");
}

namespace {

RunResult run_kind(SolverKind kind, const Problem& problem, const FedConfig& config,
                   SolverHooks hooks, std::optional<FactorState> init) {
  auto solver = make_solver(kind, problem, config, std::move(init), std::move(hooks));
  RunResult out;
  out.initial_objective = solver->current_objective();
  out.trace = solver->run();
  out.state = solver->state();
  return out;
}

}  // namespace

RunResult run_fedcavg(const Problem& problem, const FedConfig& config, SolverHooks hooks,
                      std::optional<FactorState> init) {
  return run_kind(SolverKind::FedCAvg, problem, config, std::move(hooks), std::move(init));
}

RunResult run_fedcgds(const Problem& problem, const FedConfig& config, SolverHooks hooks,
                      std::optional<FactorState> init) {
  return run_kind(SolverKind::FedCGds, problem, config, std::move(hooks), std::move(init));
}

RunResult run_fedcpalm(const Problem& problem, const FedConfig& config, SolverHooks hooks,
                       std::optional<FactorState> init) {
  return run_kind(SolverKind::FedCPALM, problem, config, std::move(hooks), std::move(init));
}

RunResult run_palm_centralized(const Problem& problem, const FedConfig& config,
                               SolverHooks hooks, std::optional<FactorState> init) {
  return run_kind(SolverKind::PALM, problem, config, std::move(hooks), std::move(init));
}

// SNCP ----------------------------------------------------------------------

std::vector<std::string> schedule_violations(const SncpSchedule& schedule) {
  std::vector<std::string> out;
  if (!(schedule.factor > 1.0)) out.emplace_back("SNCP factor must exceed 1");
  if (!(schedule.final_eps < schedule.trigger_eps)) {
    out.emplace_back("SNCP final_eps must be below trigger_eps");
  }
  if (!(schedule.final_eps > 0.0)) out.emplace_back("SNCP final_eps must be positive");
  if (schedule.rho0 < 0.0 || schedule.nu < 0.0) out.emplace_back("SNCP penalties must be nonnegative");
  if (schedule.max_stages < 1) out.emplace_back("SNCP needs at least one stage");
  return out;
}

SncpResult run_sncp(const Problem& problem, SolverKind inner, const SncpSchedule& schedule,
                    const FedConfig& config, SolverHooks hooks, std::optional<FactorState> init) {
  if (inner != SolverKind::FedCAvg && inner != SolverKind::FedCGds && inner != SolverKind::PALM) {
    throw std::invalid_argument("SNCP inner solver must be fedcavg, fedcgds or palm");
  }
  if (const auto v = schedule_violations(schedule); !v.empty()) throw std::invalid_argument(v.front());

  Problem staged = problem;
  staged.rho = schedule.rho0;
  staged.nu = schedule.nu;
  auto solver = make_solver(inner, staged, config, std::move(init), std::move(hooks));

  SncpResult out;
  double rho = schedule.rho0;
  out.rho_history.push_back(rho);
  int stage_rounds = 0;
  while (true) {
    RoundTrace t = solver->step();
    ++stage_rounds;
    out.trace.push_back(t);
    if (t.objective <= 0.0) {
      ++out.stages;
      break;
    }
    if (!(t.epsilon < schedule.trigger_eps) && stage_rounds < config.max_rounds) continue;
    ++out.stages;
    if (t.epsilon < schedule.final_eps || out.stages >= schedule.max_stages) break;
    rho *= schedule.factor;
    solver->set_rho(rho);
    out.rho_history.push_back(rho);
    stage_rounds = 0;
  }
  out.state = solver->state();
  out.uplink_total = solver->uplink_total();
  return out;
}

}  // namespace fedclust
