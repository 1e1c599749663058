#pragma once

#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "omniban_cli/experiment.hpp"

namespace omniban::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 1,
  kExitConfig = 2,
  kExitIo = 3,
  kExitDivergence = 4,
  kExitGradcheck = 5,
};

/// Writes train.jsonl, test.jsonl and manifest.json into `out_dir`.
void cmd_gen(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log);

/// Dataset from cfg.data_dir when set (checked against the task hash),
/// otherwise generated in memory.
Dataset load_or_generate(const ExperimentConfig& cfg);

struct SeedResult {
  std::uint64_t seed = 0;
  double test_accuracy = 0.0;
  double best_val_accuracy = 0.0;
  std::size_t best_epoch = 0;
  std::optional<double> glimpse_cosine;
  std::vector<EpochMetrics> history;
};

struct TrainSummary {
  std::vector<SeedResult> seeds;
  double mean_test_accuracy = 0.0;
  double std_test_accuracy = 0.0;
};

/// Trains one model per seed on worker threads. Per seed writes
/// seed_<n>/metrics.csv, seed_<n>/checkpoint.bin and seed_<n>/result.txt;
/// then summary.csv, summary.txt, config.ini and manifest.json.
TrainSummary cmd_train(const ExperimentConfig& cfg, std::ostream& log);

/// Cost comparison of OMniBAN against co-attention at cfg.model's widths.
/// Writes cost.csv (and scaling.csv for a sweep) into cfg.out_dir.
void cmd_cost(const ExperimentConfig& cfg, const std::optional<Sweep>& sweep, std::ostream& log);

/// Prints one line per registered check; true when all pass.
bool cmd_gradcheck(const ExperimentConfig& cfg, std::ostream& log);

/// Mean and sample standard deviation.
std::pair<double, double> mean_std(const std::vector<double>& values);
/// "m ± s" with values scaled by 100, one decimal.
std::string format_percent(double mean, double stddev);

void write_metrics_csv(std::ostream& os, const std::vector<EpochMetrics>& history);

}  // namespace omniban::cli
