#ifndef FEDCLUST_EXPERIMENT_HPP
#define FEDCLUST_EXPERIMENT_HPP

#include "fedclust/algorithms.hpp"
#include "fedclust/data.hpp"

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace fedclust {

struct AlgorithmEntry {
  std::string name;
  SolverKind solver = SolverKind::FedCGds;
  FedConfig config;
  bool sncp = false;
  int line = 0;
};

struct ExperimentConfig {
  std::optional<SyntheticSpec> synthetic;
  std::filesystem::path data_file;
  Index k = 0;  // cluster count; taken from `synthetic` when present
  /// Fixed dataset seed; when unset each trial uses its own seed.
  std::optional<std::uint64_t> data_seed;
  PartitionSpec partition;
  double rho = 1e-8;
  double nu = 1e-10;
  HConstraint h_constraint = HConstraint::Nonneg;
  std::vector<AlgorithmEntry> algorithms;
  int trials = 1;
  std::uint64_t seed_base = 1;
  std::optional<SncpSchedule> sncp;
  std::filesystem::path output_dir = "out";
};

struct Violation {
  int line = 0;  // 1-based; 0 when not tied to a line
  std::string message;
};

struct ConfigReport {
  std::vector<Violation> violations;
  bool ok() const { return violations.empty(); }
  std::string to_string(const std::string& source = {}) const;
};

class ConfigError : public std::runtime_error {
 public:
  ConfigError(ConfigReport report, const std::string& source);
  const ConfigReport& report() const { return report_; }

 private:
  ConfigReport report_;
};

/// Parses YAML text into `out` and collects every schema or semantic
/// violation found. `base_dir` resolves a relative dataset file path.
ConfigReport parse_experiment_config(const std::string& text, ExperimentConfig& out,
                                     const std::filesystem::path& base_dir = {});

/// Full validation of a config file without running anything.
ConfigReport validate_config_file(const std::filesystem::path& path);

/// Throws ConfigError on any violation, FormatError(Io) if unreadable.
ExperimentConfig load_experiment_config(const std::filesystem::path& path);

/// Semantic checks on an already-parsed config (used after CLI overrides).
std::vector<Violation> semantic_violations(const ExperimentConfig& config);

struct MeanRow {
  int round = 0;
  double mean_f = 0.0;
  double std_f = 0.0;
  std::uint64_t cum_uplink = 0;
  std::optional<double> mean_accuracy;
};

struct AlgorithmOutcome {
  std::string name;
  SolverKind solver = SolverKind::FedCGds;
  std::vector<std::vector<RoundTrace>> trials;
  std::vector<MeanRow> mean;
};

struct ExperimentResult {
  std::vector<AlgorithmOutcome> algorithms;
  std::vector<std::filesystem::path> files;
};

/// Builds the per-trial problem: dataset, partition and model parameters.
Problem build_trial_problem(const ExperimentConfig& config, int trial);

/// Runs every algorithm for every trial. When `write_files` is set, writes
/// `<name>_trial<k>.csv` and `<name>_mean.csv` into the output directory.
ExperimentResult run_experiment(const ExperimentConfig& config, bool write_files = true);

/// Mean and population standard deviation of F over trials per round.
/// Shorter traces carry their last row forward.
std::vector<MeanRow> mean_trace(const std::vector<std::vector<RoundTrace>>& trials);

void write_trace_csv(const std::filesystem::path& path, const std::vector<RoundTrace>& trace);
void write_mean_csv(const std::filesystem::path& path, const std::vector<MeanRow>& rows);

std::string_view to_string(StepRuleH rule);
std::string_view to_string(StepRuleW rule);
StepRuleH parse_step_rule_h(std::string_view name);
StepRuleW parse_step_rule_w(std::string_view name);

}  // namespace fedclust

#endif  // FEDCLUST_EXPERIMENT_HPP
