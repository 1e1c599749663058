#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <nlohmann/json.hpp>
#include <set>
#include <sstream>
#include <sys/wait.h>

#include "omniban/checkpoint.hpp"
#include "omniban/errors.hpp"
#include "omniban/gradcheck.hpp"
#include "omniban_cli/commands.hpp"

using namespace omniban;
using namespace omniban::cli;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("omniban_cli_test_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

ExperimentConfig tiny_experiment(const fs::path& out) {
  std::istringstream ini(R"(
[model]
d_v = 8
d_m = 4
heads = 2
glimpses = 2
coattention_layers = 1
[train]
epochs = 2
batch_size = 8
learning_rate = 0.01
[task]
image_concepts = 3
question_concepts = 3
answers = 4
image_dim = 6
question_dim = 8
max_len = 4
min_len = 2
distractors = 4
seed = 9
[data]
n_train = 40
n_test = 12
)");
  ExperimentConfig cfg = parse_experiment(ini);
  cfg.out_dir = out.string();
  return cfg;
}

bool same_examples(const std::vector<Example>& a, const std::vector<Example>& b) {
  if (a.size() != b.size()) return false;
  for (std::size_t i = 0; i < a.size(); ++i) {
    if (!bit_equal(a[i].image.matrix, b[i].image.matrix) || !bit_equal(a[i].question.matrix, b[i].question.matrix) ||
        a[i].question.mask != b[i].question.mask || a[i].answer != b[i].answer) {
      return false;
    }
  }
  return true;
}

int run_cli(const std::string& args) {
  const std::string cmd = std::string(OMNIBAN_CLI_PATH) + " " + args + " >/dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

}  // namespace

TEST_CASE("defaults follow the reference training protocol") {
  const ExperimentConfig cfg = default_experiment();
  CHECK(cfg.train.learning_rate == 0.0005);
  CHECK(cfg.train.batch_size == 32);
  CHECK(cfg.train.epochs == 40);
  CHECK(cfg.train.alpha_max == 0.5);
  CHECK(cfg.model.heads == 8);
  CHECK(cfg.model.glimpses == 5);
  CHECK(cfg.n_train == 2000);
  CHECK(cfg.n_test == 500);
}

TEST_CASE("config parsing rejects unknown keys and round-trips") {
  std::istringstream bad("[model]\nd_v = 8\nwidth = 3\n");
  CHECK_THROWS_AS(parse_experiment(bad), ConfigError);
  std::istringstream bad_section("[optim]\nlr = 1\n");
  CHECK_THROWS_AS(parse_experiment(bad_section), ConfigError);
  const ExperimentConfig cfg = tiny_experiment(scratch("ini"));
  std::istringstream again(to_ini(cfg));
  const ExperimentConfig back = parse_experiment(again);
  CHECK(to_ini(back) == to_ini(cfg));
  CHECK(back.model_for_task().canonical() == cfg.model_for_task().canonical());
  CHECK(parse_seed_list("1, 2,3") == std::vector<std::uint64_t>{1, 2, 3});
  CHECK_THROWS_AS(parse_seed_list("1,x"), ConfigError);
  const Sweep s = parse_sweep("train.alpha_max=0,0.5");
  CHECK(s.key == "train.alpha_max");
  CHECK(s.values == std::vector<std::string>{"0", "0.5"});
}

TEST_CASE("gen round-trips and is byte-stable") {
  const fs::path dir = scratch("gen");
  ExperimentConfig cfg = tiny_experiment(dir);
  std::ostringstream log;
  cmd_gen(cfg, (dir / "a").string(), log);
  cmd_gen(cfg, (dir / "b").string(), log);
  CHECK(slurp(dir / "a" / "train.jsonl") == slurp(dir / "b" / "train.jsonl"));
  CHECK(slurp(dir / "a" / "test.jsonl") == slurp(dir / "b" / "test.jsonl"));

  const auto manifest = nlohmann::json::parse(slurp(dir / "a" / "manifest.json"));
  CHECK(manifest["examples"].get<std::size_t>() == cfg.n_train + cfg.n_test);
  CHECK(manifest["n_train"].get<std::size_t>() == cfg.n_train);

  const Dataset in_memory = load_or_generate(cfg);
  cfg.data_dir = (dir / "a").string();
  const Dataset loaded = load_or_generate(cfg);
  CHECK(same_examples(in_memory.train, loaded.train));
  CHECK(same_examples(in_memory.test, loaded.test));

  cfg.task.seed += 1;
  CHECK_THROWS_AS(load_or_generate(cfg), ConfigError);
}

TEST_CASE("train writes per-seed metrics and one aggregate") {
  const fs::path dir = scratch("seeds");
  ExperimentConfig cfg = tiny_experiment(dir);
  cfg.seeds = {1, 2};
  std::ostringstream log;
  const TrainSummary s = cmd_train(cfg, log);
  CHECK(s.seeds.size() == 2);
  std::size_t metric_files = 0;
  for (const auto& e : fs::recursive_directory_iterator(dir)) metric_files += e.path().filename() == "metrics.csv";
  CHECK(metric_files == 2);
  CHECK(fs::exists(dir / "seed_1" / "checkpoint.bin"));
  CHECK(fs::exists(dir / "seed_2" / "metrics.csv"));
  CHECK(fs::exists(dir / "summary.csv"));
  CHECK(fs::exists(dir / "summary.txt"));
  CHECK(slurp(dir / "summary.txt").find(" ± ") != std::string::npos);
  const std::string metrics = slurp(dir / "seed_1" / "metrics.csv");
  CHECK(metrics.rfind("epoch,train_loss,ortho_loss,alpha,val_acc\n", 0) == 0);
}

TEST_CASE("zero epochs writes the initial parameters") {
  const fs::path dir = scratch("epochs0");
  ExperimentConfig cfg = tiny_experiment(dir);
  cfg.train.epochs = 0;
  cfg.seeds = {4};
  std::ostringstream log;
  cmd_train(cfg, log);
  const Model saved = load_checkpoint((dir / "seed_4" / "checkpoint.bin").string());
  Rng init = Rng(4).split("init");
  CHECK(same_parameters(saved, Model(cfg.model_for_task(), init)));
  CHECK(slurp(dir / "seed_4" / "metrics.csv") == "epoch,train_loss,ortho_loss,alpha,val_acc\n");
}

TEST_CASE("repeated training is byte-identical") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  std::ostringstream log;
  cmd_train(tiny_experiment(a), log);
  cmd_train(tiny_experiment(b), log);
  for (const char* f : {"seed_0/metrics.csv", "seed_0/checkpoint.bin", "seed_0/result.txt", "summary.csv"}) {
    INFO(f);
    CHECK(slurp(a / f) == slurp(b / f));
  }
}

TEST_CASE("cost command reports ratios and scaling") {
  const fs::path dir = scratch("cost");
  ExperimentConfig cfg = tiny_experiment(dir);
  cfg.cost_n_q = 5;
  std::ostringstream log;
  cmd_cost(cfg, parse_sweep("N_q=4,8"), log);
  CHECK(log.str().find("FLOP convention") != std::string::npos);
  const std::string csv = slurp(dir / "cost.csv");
  CHECK(csv.find("\nparameters,") != std::string::npos);
  CHECK(csv.find("\nflops,") != std::string::npos);
  CHECK(fs::exists(dir / "scaling.csv"));
}

TEST_CASE("gradcheck report lists every check once") {
  std::ostringstream log;
  CHECK(cmd_gradcheck(default_experiment(), log));
  std::multiset<std::string> names;
  std::istringstream lines(log.str());
  std::string group, name;
  std::string line;
  while (std::getline(lines, line)) {
    std::istringstream ls(line);
    ls >> group >> name;
    if (group == "op" || group == "composite" || group == "model") names.insert(name);
  }
  CHECK(names.size() == gradcheck_registry().size());
  for (const auto& c : gradcheck_registry()) CHECK(names.count(c.name) == 1);
}

TEST_CASE("gradcheck detects an injected fault") {
  testing::set_backward_fault(OpKind::kMatMul);
  std::ostringstream log;
  const bool ok = cmd_gradcheck(default_experiment(), log);
  testing::set_backward_fault(std::nullopt);
  CHECK_FALSE(ok);
  CHECK(log.str().find("FAILED: matmul") != std::string::npos);
}

TEST_CASE("summary helpers") {
  const auto [m, s] = mean_std({0.654, 0.664, 0.674});
  CHECK(m == doctest::Approx(0.664));
  CHECK(s == doctest::Approx(0.01));
  CHECK(format_percent(0.664, 0.01) == "66.4 ± 1.0");
}

TEST_CASE("exit codes are distinct") {
  const fs::path dir = scratch("exit");
  CHECK(run_cli("gradcheck") == kExitOk);
  CHECK(run_cli("") == kExitUsage);
  CHECK(run_cli("train --config " + (dir / "missing.ini").string()) == kExitIo);
  std::ofstream(dir / "bad.ini") << "[model]\nbogus = 1\n";
  CHECK(run_cli("train --config " + (dir / "bad.ini").string()) == kExitConfig);
  std::ofstream(dir / "div.ini") << "[train]\nlearning_rate = 1e300\nepochs = 1\n[data]\nn_train = 40\nn_test = 10\n";
  CHECK(run_cli("train --config " + (dir / "div.ini").string() + " --out " + (dir / "div").string()) ==
        kExitDivergence);
  CHECK(run_cli("gradcheck --inject-fault relu") == kExitGradcheck);
  CHECK(run_cli("gradcheck --inject-fault nosuchop") == kExitConfig);
}
