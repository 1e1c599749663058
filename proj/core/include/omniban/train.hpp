#pragma once

#include <cstdint>
#include <functional>
#include <vector>

#include "omniban/model.hpp"

namespace omniban {

struct TrainConfig {
  double learning_rate = 5e-4;
  std::size_t batch_size = 32;
  std::size_t epochs = 40;
  double alpha_max = 0.5;
  /// false drops the orthogonality term from the graph entirely.
  bool orthogonality = true;
  /// Share of the training set held out for best-checkpoint selection.
  double validation_fraction = 0.1;
  std::uint64_t seed = 0;
  /// Invoke the checkpoint callback every N epochs; 0 disables it.
  std::size_t checkpoint_every = 0;

  void validate() const;
};

struct EpochMetrics {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double ortho_loss = 0.0;
  double alpha = 0.0;
  double val_acc = 0.0;

  friend bool operator==(const EpochMetrics&, const EpochMetrics&) = default;
};

struct TrainResult {
  Model best;
  Model last;
  std::vector<EpochMetrics> history;
  double best_val_acc = 0.0;
  std::size_t best_epoch = 0;
};

using CheckpointCallback = std::function<void(std::size_t epoch, const Model& model)>;

/// Full training run: Adamax on BCE-with-logits plus the ramped
/// orthogonality term, keeping the parameters with the best validation
/// accuracy. Deterministic given the configs, data and seed.
/// Throws DivergenceError on a non-finite loss.
TrainResult train(const FusionConfig& model_config, const TrainConfig& train_config,
                  const std::vector<Example>& train_set, const CheckpointCallback& on_checkpoint = {});

double accuracy(const Model& model, const std::vector<Example>& examples);

/// Mean over examples of the mean pairwise cosine similarity between glimpse
/// distributions. OMniBAN models only.
double mean_glimpse_cosine(const Model& model, const std::vector<Example>& examples);

/// Gradients of every model parameter from a tape after backward(), in
/// visit order; zeros for parameters not reached.
std::vector<Tensor> collect_gradients(const Model& model, const Tape& tape);

}  // namespace omniban
