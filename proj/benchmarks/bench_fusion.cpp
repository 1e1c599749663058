#include <benchmark/benchmark.h>

#include "omniban/bilinear.hpp"
#include "omniban/cost_model.hpp"
#include "omniban/model.hpp"
#include "omniban/train.hpp"

using namespace omniban;

namespace {

void BM_Matmul(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(1);
  const Tensor a = rng.normal_tensor({n, n}, 1.0), b = rng.normal_tensor({n, n}, 1.0);
  for (auto _ : state) {
    Tape tape(Tape::Mode::kInference);
    benchmark::DoNotOptimize(matmul(tape.constant(a), tape.constant(b)).value().data().data());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(2 * n * n * n));
}
BENCHMARK(BM_Matmul)->RangeMultiplier(2)->Range(32, 256);

// Forward pass at the reference widths; N_q is the argument.
void BM_Forward(benchmark::State& state, Architecture arch) {
  const auto n_q = static_cast<std::size_t>(state.range(0));
  const FusionConfig c = reference_config(arch);
  Rng rng(2);
  const Model model(c, rng);
  const Example ex = reference_example(c, 1, n_q);
  for (auto _ : state) {
    Tape tape(Tape::Mode::kInference);
    benchmark::DoNotOptimize(model.forward(tape, ex).logits.value().data().data());
  }
  state.counters["MFLOPs"] = static_cast<double>(measure_flops(model, ex).total_flops()) / 1e6;
}
BENCHMARK_CAPTURE(BM_Forward, omniban, Architecture::kOmniban)->Arg(20)->Arg(64)->Unit(benchmark::kMillisecond);
BENCHMARK_CAPTURE(BM_Forward, coattention, Architecture::kCoattention)->Arg(20)->Arg(64)->Unit(benchmark::kMillisecond);

// One training step (forward + backward) on a desk-scale model.
void BM_TrainStep(benchmark::State& state) {
  SyntheticTaskSpec spec;
  spec.image_dim = 32;
  spec.question_dim = 32;
  spec.max_len = 8;
  const Dataset data = make_dataset(spec, 32, 1, Rng(3));
  FusionConfig c;
  c.image_input_dim = 32;
  c.d_v = 32;
  c.d_q = 32;
  c.d_m = 16;
  c.coattention_layers = 2;
  c.answers = spec.answers;
  c.intra_residual = true;
  Rng rng(4);
  const Model model(c, rng);
  for (auto _ : state) {
    Tape tape;
    Var loss = tape.constant(Tensor::scalar(0.0));
    for (const auto& ex : data.train) {
      const auto out = model.forward(tape, ex);
      loss = add(loss, bce_with_logits(out.logits, one_hot(ex.answer, c.answers)));
      loss = add(loss, scale(orthogonality_loss(out.bundle->distributions), 0.25));
    }
    tape.backward(loss);
    benchmark::DoNotOptimize(collect_gradients(model, tape).size());
  }
  state.SetItemsProcessed(state.iterations() * static_cast<std::int64_t>(data.train.size()));
}
BENCHMARK(BM_TrainStep)->Unit(benchmark::kMillisecond);

void BM_OrthogonalityLoss(benchmark::State& state) {
  const auto n = static_cast<std::size_t>(state.range(0));
  Rng rng(5);
  const Tensor p = rng.uniform_tensor({5, n}, 0.0, 1.0);
  for (auto _ : state) benchmark::DoNotOptimize(orthogonality_loss(p));
}
BENCHMARK(BM_OrthogonalityLoss)->Arg(20)->Arg(400);

}  // namespace

BENCHMARK_MAIN();
