#include <CLI11.hpp>
#include <iostream>

#include "omniban/errors.hpp"
#include "omniban/tape.hpp"
#include "omniban_cli/commands.hpp"

using namespace omniban;
using namespace omniban::cli;

namespace {

struct Flags {
  std::string config;
  std::string seeds;
  std::string out;
  std::string arch;
  std::string sweep;
  std::string data;
  std::optional<std::size_t> epochs;
  bool no_mha = false;
  bool no_ortho = false;
  std::string fault;
};

// Test fixture: negate the cotangent fed to one op's backward rule.
void inject_fault(const std::string& name) {
  for (int k = static_cast<int>(OpKind::kMatMul); k <= static_cast<int>(OpKind::kBceWithLogits); ++k) {
    if (op_name(static_cast<OpKind>(k)) == name) {
      testing::set_backward_fault(static_cast<OpKind>(k));
      return;
    }
  }
  throw ConfigError("unknown op '" + name + "'");
}

ExperimentConfig resolve(const Flags& f) {
  ExperimentConfig cfg = f.config.empty() ? default_experiment() : load_experiment(f.config);
  if (!f.seeds.empty()) cfg.seeds = parse_seed_list(f.seeds);
  if (!f.out.empty()) cfg.out_dir = f.out;
  if (!f.arch.empty()) cfg.model.arch = parse_architecture(f.arch);
  if (!f.data.empty()) cfg.data_dir = f.data;
  if (f.epochs) cfg.train.epochs = *f.epochs;
  if (f.no_mha) cfg.model.intra_attention = false, cfg.model.intra_residual = false;
  if (f.no_ortho) cfg.train.orthogonality = false;
  return cfg;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"OMniBAN fusion experiments: data generation, training, cost analysis, gradient checks"};
  app.require_subcommand(1);
  Flags flags;
  auto common = [&flags](CLI::App* sub) {
    sub->add_option("--config", flags.config, "INI experiment config");
    sub->add_option("--seed,--seeds", flags.seeds, "seed or comma-separated seeds");
    sub->add_option("--out", flags.out, "output directory");
  };
  CLI::App* gen = app.add_subcommand("gen", "write a synthetic dataset");
  common(gen);
  CLI::App* tr = app.add_subcommand("train", "train one model per seed");
  common(tr);
  tr->add_option("--arch", flags.arch, "omniban | coattention | concat");
  tr->add_option("--data", flags.data, "dataset directory from `gen`");
  tr->add_option("--epochs", flags.epochs, "override train.epochs");
  tr->add_flag("--no-mha", flags.no_mha, "disable intra-modal attention");
  tr->add_flag("--no-ortho", flags.no_ortho, "drop the orthogonality loss");
  tr->add_option("--sweep", flags.sweep, "section.key=V1,V2,... one run per value");
  CLI::App* cost = app.add_subcommand("cost", "compare parameters and FLOPs");
  common(cost);
  cost->add_option("--sweep", flags.sweep, "N_q=8,16,... or N_v=... scaling table");
  CLI::App* gc = app.add_subcommand("gradcheck", "finite-difference gradient checks");
  common(gc);
  gc->add_option("--inject-fault", flags.fault)->group("");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kExitOk : kExitUsage;
  }

  try {
    ExperimentConfig cfg = resolve(flags);
    if (gen->parsed()) {
      cmd_gen(cfg, cfg.out_dir, std::cout);
    } else if (tr->parsed()) {
      if (flags.sweep.empty()) {
        cmd_train(cfg, std::cout);
      } else {
        const Sweep sweep = parse_sweep(flags.sweep);
        for (const auto& v : sweep.values) {
          ExperimentConfig run = cfg;
          apply_override(run, sweep.key, v);
          run.out_dir = cfg.out_dir + "/" + sweep.key + "=" + v;
          std::cout << "== " << sweep.key << " = " << v << '\n';
          cmd_train(run, std::cout);
        }
      }
    } else if (cost->parsed()) {
      std::optional<Sweep> sweep;
      if (!flags.sweep.empty()) sweep = parse_sweep(flags.sweep);
      cmd_cost(cfg, sweep, std::cout);
    } else if (gc->parsed()) {
      if (!flags.fault.empty()) inject_fault(flags.fault);
      if (!cmd_gradcheck(cfg, std::cout)) return kExitGradcheck;
    }
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const DimensionError& e) {
    std::cerr << "config error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const IoError& e) {
    std::cerr << "i/o error: " << e.what() << '\n';
    return kExitIo;
  } catch (const DivergenceError& e) {
    std::cerr << "training diverged: " << e.what() << '\n';
    return kExitDivergence;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return kExitUsage;
  }
  return kExitOk;
}
