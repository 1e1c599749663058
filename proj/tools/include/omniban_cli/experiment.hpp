#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "omniban/encoder_stub.hpp"
#include "omniban/model.hpp"
#include "omniban/train.hpp"

namespace omniban::cli {

/// Everything one invocation needs. Parsed from an INI file with sections
/// [model], [train], [task], [data], [run] and [cost]; unknown keys are errors.
struct ExperimentConfig {
  FusionConfig model;
  TrainConfig train;
  SyntheticTaskSpec task;
  std::size_t n_train = 2000;
  std::size_t n_test = 500;
  /// Dataset directory written by `gen`; empty means generate in memory.
  std::string data_dir;
  std::string out_dir = "out";
  std::vector<std::uint64_t> seeds = {0};
  std::size_t cost_n_v = 1;
  std::size_t cost_n_q = 20;
  std::size_t gradcheck_seeds = 1;

  // Model widths tied to the task; set only when given explicitly.
  std::optional<std::size_t> explicit_image_input_dim;
  std::optional<std::size_t> explicit_d_q;
  std::optional<std::size_t> explicit_answers;

  /// Model configuration for training on `task`: input widths and answer
  /// count come from the task. ConfigError when explicit values disagree.
  FusionConfig model_for_task() const;
  void validate() const;
};

ExperimentConfig default_experiment();
ExperimentConfig parse_experiment(std::istream& in);
ExperimentConfig load_experiment(const std::string& path);
/// Applies one "section.key=value" override.
void apply_override(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value);
/// INI text that parses back to `cfg`.
std::string to_ini(const ExperimentConfig& cfg);

std::vector<std::uint64_t> parse_seed_list(const std::string& text);

struct Sweep {
  std::string key;
  std::vector<std::string> values;
};
/// "KEY=V1,V2,..."
Sweep parse_sweep(const std::string& text);

}  // namespace omniban::cli
