#include "fedclust/experiment.hpp"

#include <yaml-cpp/yaml.h>

#include <cmath>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

namespace fedclust {

std::string_view to_string(StepRuleH rule) {
  switch (rule) {
    case StepRuleH::PracticalV: return "practical_v";
    case StepRuleH::TheoremGamma: return "theorem_gamma";
  }
  return "unknown";
}

std::string_view to_string(StepRuleW rule) {
  switch (rule) {
    case StepRuleW::PracticalAvg: return "practical_avg";
    case StepRuleW::PracticalGds: return "practical_gds";
    case StepRuleW::DiminishingT1: return "diminishing_t1";
    case StepRuleW::ConstantT2: return "constant_t2";
    case StepRuleW::HalfGammaT3: return "half_gamma_t3";
  }
  return "unknown";
}

StepRuleH parse_step_rule_h(std::string_view name) {
  for (auto r : {StepRuleH::PracticalV, StepRuleH::TheoremGamma}) {
    if (name == to_string(r)) return r;
  }
  throw std::invalid_argument("unknown H step rule '" + std::string(name) + "'");
}

StepRuleW parse_step_rule_w(std::string_view name) {
  for (auto r : {StepRuleW::PracticalAvg, StepRuleW::PracticalGds, StepRuleW::DiminishingT1,
                 StepRuleW::ConstantT2, StepRuleW::HalfGammaT3}) {
    if (name == to_string(r)) return r;
  }
  throw std::invalid_argument("unknown W step rule '" + std::string(name) + "'");
}

std::string ConfigReport::to_string(const std::string& source) const {
  std::ostringstream out;
  for (const auto& v : violations) {
    if (!source.empty()) out << source << ":";
    if (v.line > 0) out << v.line << ":";
    out << (source.empty() && v.line == 0 ? "" : " ") << v.message << "\n";
  }
  return out.str();
}

ConfigError::ConfigError(ConfigReport report, const std::string& source)
    : std::runtime_error("invalid configuration\n" + report.to_string(source)),
      report_(std::move(report)) {}

namespace {

int line_of(const YAML::Node& node, int fallback) {
  const auto mark = node.Mark();
  return mark.line >= 0 ? mark.line + 1 : fallback;
}

/// Collects violations while reading typed fields from YAML maps.
class FieldReader {
 public:
  explicit FieldReader(ConfigReport& report) : report_(report) {}

  void fail(int line, std::string message) { report_.violations.push_back({line, std::move(message)}); }

  bool expect_map(const YAML::Node& node, const std::string& what, int fallback) {
    if (node && node.IsMap()) return true;
    fail(node ? line_of(node, fallback) : fallback, what + " must be a mapping");
    return false;
  }

  void reject_unknown(const YAML::Node& map, const std::set<std::string>& allowed,
                      const std::string& where) {
    for (const auto& kv : map) {
      const auto key = kv.first.as<std::string>();
      if (!allowed.count(key)) fail(line_of(kv.first, 0), "unknown key '" + key + "' in " + where);
    }
  }

  template <typename T>
  bool read(const YAML::Node& map, const std::string& key, T& out, bool required, int parent_line) {
    const YAML::Node node = map[key];
    if (!node) {
      if (required) fail(parent_line, "missing required key '" + key + "'");
      return false;
    }
    try {
      out = node.as<T>();
      return true;
    } catch (const YAML::Exception&) {
      fail(line_of(node, parent_line), "key '" + key + "' has the wrong type");
      return false;
    }
  }

 private:
  ConfigReport& report_;
};

void parse_algorithm(FieldReader& r, const YAML::Node& node, AlgorithmEntry& entry, int fallback) {
  const int line = line_of(node, fallback);
  entry.line = line;
  if (!r.expect_map(node, "algorithm entry", line)) return;
  r.reject_unknown(node,
                   {"name", "solver", "gamma", "q1", "q2", "q2_schedule", "m", "rounds",
                    "eps_stop", "step_rule_h", "step_rule_w", "sncp"},
                   "algorithm entry");
  std::string solver;
  if (r.read(node, "solver", solver, true, line)) {
    try {
      entry.solver = parse_solver_kind(solver);
    } catch (const std::invalid_argument& e) {
      r.fail(line_of(node["solver"], line), e.what());
    }
  }
  if (!r.read(node, "name", entry.name, false, line)) entry.name = solver;
  auto& c = entry.config;
  r.read(node, "gamma", c.gamma, false, line);
  r.read(node, "q1", c.q1, false, line);
  r.read(node, "q2", c.q2, false, line);
  double schedule = 0.0;
  if (r.read(node, "q2_schedule", schedule, false, line)) c.q2_schedule = schedule;
  int m = 0;
  if (r.read(node, "m", m, false, line)) {
    if (m < 1) {
      r.fail(line_of(node["m"], line), "m must be at least 1");
    } else {
      c.m = std::size_t(m);
    }
  }
  r.read(node, "rounds", c.max_rounds, false, line);
  r.read(node, "eps_stop", c.eps_stop, false, line);
  std::string rule;
  if (r.read(node, "step_rule_h", rule, false, line)) {
    try {
      c.step_rule_h = parse_step_rule_h(rule);
    } catch (const std::invalid_argument& e) {
      r.fail(line_of(node["step_rule_h"], line), e.what());
    }
  }
  if (r.read(node, "step_rule_w", rule, false, line)) {
    try {
      c.step_rule_w = parse_step_rule_w(rule);
    } catch (const std::invalid_argument& e) {
      r.fail(line_of(node["step_rule_w"], line), e.what());
    }
  } else if (entry.solver == SolverKind::FedCAvg || entry.solver == SolverKind::FedCPALM) {
    c.step_rule_w = StepRuleW::PracticalAvg;
  }
  r.read(node, "sncp", entry.sncp, false, line);
}

}  // namespace

std::vector<Violation> semantic_violations(const ExperimentConfig& config) {
  std::vector<Violation> out;
  auto add = [&](int line, std::string msg) { out.push_back({line, std::move(msg)}); };
  if (config.trials < 1) add(0, "trials must be at least 1");
  if (config.partition.clients < 1) add(0, "partition needs at least one client");
  if (config.rho < 0.0 || config.nu < 0.0) add(0, "penalties must be nonnegative");
  if (config.synthetic) {
    const auto& s = *config.synthetic;
    if (s.m < 1 || s.n < 1 || s.k < 1) add(0, "synthetic dimensions must be positive");
    if (s.k > std::min(s.m, s.n)) add(0, "synthetic K must not exceed min(M, N)");
    if (Index(config.partition.clients) > s.n) add(0, "more clients than samples");
    if (std::isnan(s.snr_db) || s.snr_db == -std::numeric_limits<double>::infinity()) {
      add(0, "snr_db must be finite or +inf");
    }
  } else if (config.k < 1) {
    add(0, "dataset.k must be at least 1 for file datasets");
  }
  if (config.partition.scheme == PartitionScheme::TwoClassPowerLaw &&
      !(config.partition.power_law_exponent > 0.0)) {
    add(0, "power_law_exponent must be positive");
  }
  if (config.algorithms.empty()) add(0, "at least one algorithm is required");
  std::set<std::string> names;
  for (const auto& a : config.algorithms) {
    if (!names.insert(a.name).second) add(a.line, "duplicate algorithm name '" + a.name + "'");
    if (a.solver == SolverKind::KMeansPP) {
      if (a.sncp) add(a.line, "kmeanspp cannot run under SNCP");
      if (a.config.max_rounds < 1) add(a.line, "round budget must be at least 1");
      continue;
    }
    for (auto& v : config_violations(a.config, a.solver, config.partition.clients)) {
      add(a.line, a.name + ": " + v);
    }
    if (a.sncp) {
      if (a.solver == SolverKind::FedCPALM) add(a.line, a.name + ": SNCP supports fedcavg, fedcgds and palm");
      if (!config.sncp) add(a.line, a.name + ": sncp requested but no sncp schedule given");
    }
  }
  if (config.sncp) {
    for (auto& v : schedule_violations(*config.sncp)) add(0, v);
  }
  return out;
}

ConfigReport parse_experiment_config(const std::string& text, ExperimentConfig& out,
                                     const std::filesystem::path& base_dir) {
  ConfigReport report;
  FieldReader r(report);
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    r.fail(e.mark.line + 1, "syntax error: " + e.msg);
    return report;
  }
  if (!r.expect_map(root, "configuration root", 1)) return report;
  r.reject_unknown(root,
                   {"dataset", "partition", "model", "algorithms", "trials", "seed_base", "sncp",
                    "output_dir"},
                   "configuration root");

  const YAML::Node dataset = root["dataset"];
  if (!dataset) {
    r.fail(1, "missing required key 'dataset'");
  } else if (r.expect_map(dataset, "dataset", 1)) {
    const int dline = line_of(dataset, 1);
    r.reject_unknown(dataset, {"synthetic", "file", "k", "seed"}, "dataset");
    std::uint64_t seed = 0;
    if (r.read(dataset, "seed", seed, false, dline)) out.data_seed = seed;
    const YAML::Node syn = dataset["synthetic"];
    const YAML::Node file = dataset["file"];
    if (syn && file) r.fail(dline, "dataset must give either 'synthetic' or 'file', not both");
    if (!syn && !file) r.fail(dline, "dataset needs 'synthetic' or 'file'");
    if (syn && r.expect_map(syn, "dataset.synthetic", dline)) {
      const int sline = line_of(syn, dline);
      r.reject_unknown(syn, {"m", "n", "k", "snr_db"}, "dataset.synthetic");
      SyntheticSpec s;
      r.read(syn, "m", s.m, true, sline);
      r.read(syn, "n", s.n, true, sline);
      r.read(syn, "k", s.k, true, sline);
      r.read(syn, "snr_db", s.snr_db, false, sline);
      out.synthetic = s;
      out.k = s.k;
    }
    if (file) {
      std::string path;
      if (r.read(dataset, "file", path, true, dline)) {
        out.data_file = std::filesystem::path(path).is_absolute() ? std::filesystem::path(path)
                                                                  : base_dir / path;
        if (!std::filesystem::exists(out.data_file)) {
          r.fail(line_of(file, dline), "dataset file '" + out.data_file.string() + "' not found");
        }
      }
      r.read(dataset, "k", out.k, true, dline);
    }
  }

  const YAML::Node part = root["partition"];
  if (!part) {
    r.fail(1, "missing required key 'partition'");
  } else if (r.expect_map(part, "partition", 1)) {
    const int pline = line_of(part, 1);
    r.reject_unknown(part, {"scheme", "clients", "power_law_exponent"}, "partition");
    std::string scheme;
    if (r.read(part, "scheme", scheme, true, pline)) {
      try {
        out.partition.scheme = parse_partition_scheme(scheme);
      } catch (const std::invalid_argument& e) {
        r.fail(line_of(part["scheme"], pline), e.what());
      }
    }
    int clients = 0;
    if (r.read(part, "clients", clients, true, pline)) {
      if (clients < 1) {
        r.fail(line_of(part["clients"], pline), "clients must be at least 1");
      } else {
        out.partition.clients = std::size_t(clients);
      }
    }
    r.read(part, "power_law_exponent", out.partition.power_law_exponent, false, pline);
  }

  if (const YAML::Node model = root["model"]) {
    if (r.expect_map(model, "model", 1)) {
      const int mline = line_of(model, 1);
      r.reject_unknown(model, {"rho", "nu", "h_constraint"}, "model");
      r.read(model, "rho", out.rho, false, mline);
      r.read(model, "nu", out.nu, false, mline);
      std::string hc;
      if (r.read(model, "h_constraint", hc, false, mline)) {
        if (hc == "nonneg") {
          out.h_constraint = HConstraint::Nonneg;
        } else if (hc == "simplex") {
          out.h_constraint = HConstraint::Simplex;
        } else {
          r.fail(line_of(model["h_constraint"], mline), "h_constraint must be nonneg or simplex");
        }
      }
    }
  }

  r.read(root, "trials", out.trials, false, 1);
  r.read(root, "seed_base", out.seed_base, false, 1);
  std::string dir;
  if (r.read(root, "output_dir", dir, false, 1)) out.output_dir = dir;

  if (const YAML::Node sncp = root["sncp"]) {
    if (r.expect_map(sncp, "sncp", 1)) {
      const int sline = line_of(sncp, 1);
      r.reject_unknown(sncp, {"rho0", "factor", "trigger_eps", "final_eps", "nu", "max_stages"},
                       "sncp");
      SncpSchedule s;
      r.read(sncp, "rho0", s.rho0, false, sline);
      r.read(sncp, "factor", s.factor, false, sline);
      r.read(sncp, "trigger_eps", s.trigger_eps, false, sline);
      r.read(sncp, "final_eps", s.final_eps, false, sline);
      r.read(sncp, "nu", s.nu, false, sline);
      r.read(sncp, "max_stages", s.max_stages, false, sline);
      out.sncp = s;
    }
  }

  const YAML::Node algos = root["algorithms"];
  if (!algos) {
    r.fail(1, "missing required key 'algorithms'");
  } else if (!algos.IsSequence()) {
    r.fail(line_of(algos, 1), "algorithms must be a list");
  } else {
    for (const auto& node : algos) {
      AlgorithmEntry entry;
      parse_algorithm(r, node, entry, line_of(algos, 1));
      out.algorithms.push_back(std::move(entry));
    }
  }

  // Semantic checks only make sense once the structure parsed cleanly.
  if (report.ok()) {
    for (auto& v : semantic_violations(out)) report.violations.push_back(std::move(v));
  }
  return report;
}

namespace {

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw FormatError(FormatError::Kind::Io, "cannot read " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

ConfigReport validate_config_file(const std::filesystem::path& path) {
  ExperimentConfig cfg;
  std::string text;
  try {
    text = read_text(path);
  } catch (const FormatError& e) {
    ConfigReport rep;
    rep.violations.push_back({0, e.what()});
    return rep;
  }
  return parse_experiment_config(text, cfg, path.parent_path());
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
  ExperimentConfig cfg;
  auto report = parse_experiment_config(read_text(path), cfg, path.parent_path());
  if (!report.ok()) throw ConfigError(std::move(report), path.string());
  return cfg;
}

Problem build_trial_problem(const ExperimentConfig& config, int trial) {
  const std::uint64_t trial_seed = config.seed_base + std::uint64_t(trial);
  const std::uint64_t data_seed = config.data_seed.value_or(trial_seed);
  Matrix x;
  std::vector<int> labels;
  Index k = config.k;
  if (config.synthetic) {
    SyntheticSpec spec = *config.synthetic;
    spec.seed = data_seed;
    auto data = gen_synthetic(spec);
    x = std::move(data.x);
    labels = std::move(data.labels);
    k = spec.k;
  } else {
    auto loaded = load_matrix(config.data_file);
    x = std::move(loaded.x);
    labels = std::move(loaded.labels);
  }
  Rng rng = Rng(data_seed).substream(stream::kPartition);
  auto shards = partition(x, labels, config.partition, rng);
  return make_problem(std::move(shards), k, config.rho, config.nu, config.h_constraint);
}

namespace {

std::vector<RoundTrace> run_kmeans_trace(const Problem& problem, std::uint64_t seed, int max_iters) {
  const Problem merged = merge_shards(problem);
  const DataShard& all = merged.shards.front();
  Rng rng = Rng(seed).substream(stream::kKMeans);
  const auto km = run_kmeanspp(all.x, int(problem.k), rng, max_iters);
  std::vector<RoundTrace> trace;
  double prev = 0.0;
  for (std::size_t i = 0; i < km.cost_history.size(); ++i) {
    RoundTrace t;
    t.round = int(i) + 1;
    t.objective = km.cost_history[i] / double(problem.n);
    if (i > 0 && prev > 0.0) t.epsilon = epsilon(prev, t.objective);
    prev = t.objective;
    if (all.has_labels() && i + 1 == km.cost_history.size()) {
      t.accuracy = clustering_accuracy(km.labels, all.labels, int(problem.k));
    }
    trace.push_back(t);
  }
  return trace;
}

std::vector<RoundTrace> run_entry(const AlgorithmEntry& entry, const ExperimentConfig& config,
                                  const Problem& problem, std::uint64_t seed) {
  FedConfig fc = entry.config;
  fc.seed = seed;
  if (entry.solver == SolverKind::KMeansPP) return run_kmeans_trace(problem, seed, fc.max_rounds);
  const FactorState init = initial_state(problem, seed);
  if (entry.sncp) return run_sncp(problem, entry.solver, *config.sncp, fc, {}, init).trace;
  auto solver = make_solver(entry.solver, problem, fc, init);
  return solver->run();
}

std::string format_double(double v) {
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  if (std::isnan(v)) return "nan";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

std::vector<MeanRow> mean_trace(const std::vector<std::vector<RoundTrace>>& trials) {
  std::size_t rows = 0;
  for (const auto& t : trials) rows = std::max(rows, t.size());
  std::vector<MeanRow> out;
  out.reserve(rows);
  for (std::size_t r = 0; r < rows; ++r) {
    MeanRow row;
    row.round = int(r) + 1;
    double sum = 0.0, acc_sum = 0.0;
    std::size_t count = 0, acc_count = 0;
    for (const auto& t : trials) {
      if (t.empty()) continue;
      const RoundTrace& rt = t[std::min(r, t.size() - 1)];
      if (r < t.size()) {
        row.round = rt.round;
        row.cum_uplink = rt.uplink_cost;
      }
      sum += rt.objective;
      ++count;
      if (rt.accuracy) {
        acc_sum += *rt.accuracy;
        ++acc_count;
      }
    }
    if (count == 0) continue;
    row.mean_f = sum / double(count);
    double sq = 0.0;
    for (const auto& t : trials) {
      if (t.empty()) continue;
      const double d = t[std::min(r, t.size() - 1)].objective - row.mean_f;
      sq += d * d;
    }
    row.std_f = std::sqrt(sq / double(count));
    if (acc_count) row.mean_accuracy = acc_sum / double(acc_count);
    out.push_back(row);
  }
  return out;
}

void write_trace_csv(const std::filesystem::path& path, const std::vector<RoundTrace>& trace) {
  std::ofstream out(path);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  out << "round,F,eps,cum_uplink,accuracy\n";
  for (const auto& t : trace) {
    out << t.round << ',' << format_double(t.objective) << ',' << format_double(t.epsilon) << ','
        << t.uplink_cost << ',' << (t.accuracy ? format_double(*t.accuracy) : "") << '\n';
  }
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed for " + path.string());
}

void write_mean_csv(const std::filesystem::path& path, const std::vector<MeanRow>& rows) {
  std::ofstream out(path);
  if (!out) throw FormatError(FormatError::Kind::Io, "cannot write " + path.string());
  out << "round,mean_F,std_F,cum_uplink,mean_accuracy\n";
  for (const auto& r : rows) {
    out << r.round << ',' << format_double(r.mean_f) << ',' << format_double(r.std_f) << ','
        << r.cum_uplink << ',' << (r.mean_accuracy ? format_double(*r.mean_accuracy) : "") << '\n';
  }
  if (!out) throw FormatError(FormatError::Kind::Io, "write failed for " + path.string());
}

ExperimentResult run_experiment(const ExperimentConfig& config, bool write_files) {
  if (auto v = semantic_violations(config); !v.empty()) {
    ConfigReport rep;
    rep.violations = std::move(v);
    throw ConfigError(std::move(rep), "");
  }
  ExperimentResult result;
  result.algorithms.resize(config.algorithms.size());
  for (std::size_t a = 0; a < config.algorithms.size(); ++a) {
    result.algorithms[a].name = config.algorithms[a].name;
    result.algorithms[a].solver = config.algorithms[a].solver;
  }
  for (int trial = 0; trial < config.trials; ++trial) {
    const Problem problem = build_trial_problem(config, trial);
    const std::uint64_t seed = config.seed_base + std::uint64_t(trial);
    for (std::size_t a = 0; a < config.algorithms.size(); ++a) {
      result.algorithms[a].trials.push_back(run_entry(config.algorithms[a], config, problem, seed));
    }
  }
  for (auto& outcome : result.algorithms) outcome.mean = mean_trace(outcome.trials);

  if (write_files) {
    std::error_code ec;
    std::filesystem::create_directories(config.output_dir, ec);
    if (ec) {
      throw FormatError(FormatError::Kind::Io,
                        "cannot create " + config.output_dir.string() + ": " + ec.message());
    }
    for (const auto& outcome : result.algorithms) {
      for (std::size_t t = 0; t < outcome.trials.size(); ++t) {
        auto path = config.output_dir / (outcome.name + "_trial" + std::to_string(t) + ".csv");
        write_trace_csv(path, outcome.trials[t]);
        result.files.push_back(path);
      }
      auto path = config.output_dir / (outcome.name + "_mean.csv");
      write_mean_csv(path, outcome.mean);
      result.files.push_back(path);
    }
  }
  return result;
}

}  // namespace fedclust
