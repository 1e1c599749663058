#include "omniban/train.hpp"

#include <cmath>

#include "omniban/adamax.hpp"
#include "omniban/errors.hpp"

namespace omniban {

void TrainConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (batch_size == 0) throw ConfigError("batch size must be > 0");
  if (!(alpha_max >= 0.0)) throw ConfigError("alpha_max must be >= 0");
  if (!(validation_fraction >= 0.0 && validation_fraction < 1.0)) {
    throw ConfigError("validation_fraction must lie in [0, 1)");
  }
}

std::vector<Tensor> collect_gradients(const Model& model, const Tape& tape) {
  std::vector<Tensor> grads;
  model.visit_parameters([&](const std::string&, const Tensor& p) {
    if (auto v = tape.find_parameter(p)) {
      grads.push_back(tape.grad(*v));
    } else {
      grads.push_back(Tensor::zeros(p.shape()));
    }
  });
  return grads;
}

double accuracy(const Model& model, const std::vector<Example>& examples) {
  if (examples.empty()) return 0.0;
  std::size_t hits = 0;
  for (const auto& ex : examples) {
    Tape tape(Tape::Mode::kInference);
    if (predict(model.forward(tape, ex).logits.value()) == ex.answer) ++hits;
  }
  return static_cast<double>(hits) / static_cast<double>(examples.size());
}

double mean_glimpse_cosine(const Model& model, const std::vector<Example>& examples) {
  if (model.config().arch != Architecture::kOmniban) {
    throw ConfigError("glimpse cosine is defined for OMniBAN models only");
  }
  if (examples.empty()) return 0.0;
  double total = 0.0;
  for (const auto& ex : examples) {
    Tape tape(Tape::Mode::kInference);
    const auto out = model.forward(tape, ex);
    const Tensor unit = l2_normalize_rows(out.bundle->distributions).value();
    const std::size_t g = unit.rows(), n = unit.cols();
    if (g < 2) {
      total += 1.0;
      continue;
    }
    double sum_cos = 0.0;
    std::size_t pairs = 0;
    for (std::size_t a = 0; a < g; ++a) {
      for (std::size_t b = a + 1; b < g; ++b) {
        double dot = 0.0;
        for (std::size_t k = 0; k < n; ++k) dot += unit.at(a, k) * unit.at(b, k);
        sum_cos += dot;
        ++pairs;
      }
    }
    total += sum_cos / static_cast<double>(pairs);
  }
  return total / static_cast<double>(examples.size());
}

TrainResult train(const FusionConfig& model_config, const TrainConfig& tc,
                  const std::vector<Example>& train_set, const CheckpointCallback& on_checkpoint) {
  tc.validate();
  if (train_set.empty()) throw ConfigError("training set is empty");
  const Rng root(tc.seed);
  Rng init_rng = root.split("init");
  Model model(model_config, init_rng);

  std::vector<std::size_t> order(train_set.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  Rng split_rng = root.split("validation");
  split_rng.shuffle(order);
  std::size_t n_val = static_cast<std::size_t>(
      std::ceil(tc.validation_fraction * static_cast<double>(train_set.size())));
  if (n_val >= train_set.size()) n_val = 0;
  std::vector<Example> val_set;
  std::vector<std::size_t> fit_idx;
  for (std::size_t i = 0; i < order.size(); ++i) {
    if (i < n_val) {
      val_set.push_back(train_set[order[i]]);
    } else {
      fit_idx.push_back(order[i]);
    }
  }
  // With no held-out split, selection falls back to training accuracy.
  if (val_set.empty()) val_set = train_set;

  const std::size_t batch = tc.batch_size;
  const std::size_t steps_per_epoch = (fit_idx.size() + batch - 1) / batch;
  const std::size_t total_steps = tc.epochs * steps_per_epoch;
  const AlphaSchedule schedule{tc.alpha_max, total_steps > 0 ? total_steps - 1 : 0};
  const bool use_ortho = tc.orthogonality && model_config.arch == Architecture::kOmniban;

  Adamax optimizer(AdamaxOptions{tc.learning_rate});
  Rng shuffle_rng = root.split("shuffle");
  Rng dropout_rng = root.split("dropout");

  TrainResult result{model, model, {}, -1.0, 0};
  std::vector<Tensor*> params;
  model.visit_parameters([&params](const std::string&, Tensor& p) { params.push_back(&p); });

  std::size_t step = 0;
  for (std::size_t epoch = 1; epoch <= tc.epochs; ++epoch) {
    shuffle_rng.shuffle(fit_idx);
    double loss_sum = 0.0, ortho_sum = 0.0, alpha = 0.0;
    for (std::size_t start = 0; start < fit_idx.size(); start += batch, ++step) {
      const std::size_t end = std::min(start + batch, fit_idx.size());
      const double inv_b = 1.0 / static_cast<double>(end - start);
      Tape tape;
      std::optional<Var> main_acc, ortho_acc;
      for (std::size_t i = start; i < end; ++i) {
        const Example& ex = train_set[fit_idx[i]];
        const auto out = model.forward(tape, ex, &dropout_rng);
        const Var l = bce_with_logits(out.logits, one_hot(ex.answer, model_config.answers));
        main_acc = main_acc ? add(*main_acc, l) : l;
        if (use_ortho) {
          const Var o = orthogonality_loss(out.bundle->distributions);
          ortho_acc = ortho_acc ? add(*ortho_acc, o) : o;
        }
      }
      const Var main = scale(*main_acc, inv_b);
      Var loss = main;
      double ortho_value = 0.0;
      alpha = use_ortho ? schedule.at(step) : 0.0;
      if (use_ortho) {
        const Var ortho = scale(*ortho_acc, inv_b);
        ortho_value = ortho.value().item();
        loss = total_loss(main, ortho, step, schedule);
      }
      const double loss_value = loss.value().item();
      if (!std::isfinite(loss_value)) {
        throw DivergenceError("non-finite loss at epoch " + std::to_string(epoch) + ", step " +
                              std::to_string(step));
      }
      tape.backward(loss);
      const auto grads = collect_gradients(model, tape);
      optimizer.step(params, grads);
      const double n = static_cast<double>(end - start);
      loss_sum += main.value().item() * n;
      ortho_sum += ortho_value * n;
    }
    EpochMetrics m;
    m.epoch = epoch;
    m.train_loss = loss_sum / static_cast<double>(fit_idx.size());
    m.ortho_loss = ortho_sum / static_cast<double>(fit_idx.size());
    m.alpha = alpha;
    m.val_acc = accuracy(model, val_set);
    result.history.push_back(m);
    if (m.val_acc > result.best_val_acc) {
      result.best_val_acc = m.val_acc;
      result.best_epoch = epoch;
      result.best = model;
    }
    if (on_checkpoint && tc.checkpoint_every && epoch % tc.checkpoint_every == 0) {
      on_checkpoint(epoch, model);
    }
  }
  if (tc.epochs == 0) result.best_val_acc = 0.0;
  result.last = model;
  return result;
}

}  // namespace omniban
