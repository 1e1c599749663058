#include "omniban_cli/commands.hpp"

#include <chrono>
#include <cmath>
#include <exception>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <nlohmann/json.hpp>
#include <ostream>
#include <sstream>
#include <thread>

#include "omniban/checkpoint.hpp"
#include "omniban/cost_model.hpp"
#include "omniban/errors.hpp"
#include "omniban/gradcheck.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace omniban::cli {
namespace {

void ensure_dir(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create directory '" + dir.string() + "': " + ec.message());
}

void write_file(const fs::path& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write '" + path.string() + "'");
  out << content;
  if (!out) throw IoError("write failed for '" + path.string() + "'");
}

std::string read_file(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read '" + path.string() + "'");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::string hex(std::uint64_t v) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << v;
  return os.str();
}

std::string timestamp() {
  const auto now = std::chrono::system_clock::now();
  const std::time_t t = std::chrono::system_clock::to_time_t(now);
  std::tm tm{};
  gmtime_r(&t, &tm);
  std::ostringstream os;
  os << std::put_time(&tm, "%Y-%m-%dT%H:%M:%SZ");
  return os.str();
}

Rng dataset_rng(const SyntheticTaskSpec& spec) { return Rng(spec.seed).split("dataset"); }

SeedResult run_seed(const ExperimentConfig& cfg, const FusionConfig& model_cfg, const Dataset& data,
                    std::uint64_t seed, const fs::path& dir) {
  TrainConfig tc = cfg.train;
  tc.seed = seed;
  const fs::path ckpt_dir = dir / "checkpoints";
  CheckpointCallback periodic;
  if (tc.checkpoint_every) {
    ensure_dir(ckpt_dir);
    periodic = [&ckpt_dir](std::size_t epoch, const Model& m) {
      save_checkpoint((ckpt_dir / ("epoch_" + std::to_string(epoch) + ".bin")).string(), m);
    };
  }
  TrainResult r = train(model_cfg, tc, data.train, periodic);
  SeedResult s;
  s.seed = seed;
  s.test_accuracy = accuracy(r.best, data.test);
  s.best_val_accuracy = r.best_val_acc;
  s.best_epoch = r.best_epoch;
  // Glimpse diversity is read off the end-of-training parameters.
  if (model_cfg.arch == Architecture::kOmniban) s.glimpse_cosine = mean_glimpse_cosine(r.last, data.test);
  s.history = std::move(r.history);

  std::ostringstream metrics;
  write_metrics_csv(metrics, s.history);
  write_file(dir / "metrics.csv", metrics.str());
  save_checkpoint((dir / "checkpoint.bin").string(), r.best);
  std::ostringstream res;
  res << std::setprecision(17) << "seed = " << seed << "\ntest_accuracy = " << s.test_accuracy
      << "\nbest_val_accuracy = " << s.best_val_accuracy << "\nbest_epoch = " << s.best_epoch << '\n';
  if (s.glimpse_cosine) res << "glimpse_cosine = " << *s.glimpse_cosine << '\n';
  write_file(dir / "result.txt", res.str());
  return s;
}

std::size_t parse_size(const std::string& key, const std::string& v) {
  try {
    std::size_t used = 0;
    const auto n = std::stoull(v, &used);
    if (used != v.size() || n == 0) throw std::invalid_argument(v);
    return static_cast<std::size_t>(n);
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a positive integer, got '" + v + "'");
  }
}

}  // namespace

std::pair<double, double> mean_std(const std::vector<double>& values) {
  if (values.empty()) return {0.0, 0.0};
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  if (values.size() < 2) return {mean, 0.0};
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  return {mean, std::sqrt(ss / static_cast<double>(values.size() - 1))};
}

std::string format_percent(double mean, double stddev) {
  std::ostringstream os;
  os << std::fixed << std::setprecision(1) << 100.0 * mean << " ± " << 100.0 * stddev;
  return os.str();
}

void write_metrics_csv(std::ostream& os, const std::vector<EpochMetrics>& history) {
  os << "epoch,train_loss,ortho_loss,alpha,val_acc\n" << std::setprecision(17);
  for (const auto& m : history) {
    os << m.epoch << ',' << m.train_loss << ',' << m.ortho_loss << ',' << m.alpha << ','
       << m.val_acc << '\n';
  }
}

void cmd_gen(const ExperimentConfig& cfg, const std::string& out_dir, std::ostream& log) {
  cfg.task.validate();
  const Dataset data = make_dataset(cfg.task, cfg.n_train, cfg.n_test, dataset_rng(cfg.task));
  const fs::path dir(out_dir);
  ensure_dir(dir);
  save_examples((dir / "train.jsonl").string(), data.train);
  save_examples((dir / "test.jsonl").string(), data.test);
  json manifest = {{"format_version", 1},
                   {"task_seed", cfg.task.seed},
                   {"task_hash", hex(cfg.task.hash())},
                   {"task", cfg.task.canonical()},
                   {"n_train", data.train.size()},
                   {"n_test", data.test.size()},
                   {"examples", data.train.size() + data.test.size()},
                   {"answers", data.answers},
                   {"created_at", timestamp()}};
  write_file(dir / "manifest.json", manifest.dump(2) + "\n");
  log << "wrote " << data.train.size() << " train and " << data.test.size()
      << " test examples to " << dir.string() << "\n";
}

Dataset load_or_generate(const ExperimentConfig& cfg) {
  if (cfg.data_dir.empty()) {
    return make_dataset(cfg.task, cfg.n_train, cfg.n_test, dataset_rng(cfg.task));
  }
  const fs::path dir(cfg.data_dir);
  json manifest;
  try {
    manifest = json::parse(read_file(dir / "manifest.json"));
  } catch (const json::exception& e) {
    throw IoError("bad manifest in '" + dir.string() + "': " + e.what());
  }
  if (manifest.value("task_hash", "") != hex(cfg.task.hash())) {
    throw ConfigError("dataset in '" + dir.string() + "' was generated for a different task");
  }
  Dataset d;
  d.train = load_examples((dir / "train.jsonl").string());
  d.test = load_examples((dir / "test.jsonl").string());
  d.answers = cfg.task.answers;
  return d;
}

TrainSummary cmd_train(const ExperimentConfig& cfg, std::ostream& log) {
  cfg.validate();
  const FusionConfig model_cfg = cfg.model_for_task();
  model_cfg.validate();
  const Dataset data = load_or_generate(cfg);
  const fs::path out(cfg.out_dir);
  ensure_dir(out);

  std::vector<SeedResult> results(cfg.seeds.size());
  std::vector<std::exception_ptr> errors(cfg.seeds.size());
  std::vector<std::thread> workers;
  for (std::size_t i = 0; i < cfg.seeds.size(); ++i) {
    const fs::path dir = out / ("seed_" + std::to_string(cfg.seeds[i]));
    ensure_dir(dir);
    workers.emplace_back([&, i, dir] {
      try {
        results[i] = run_seed(cfg, model_cfg, data, cfg.seeds[i], dir);
      } catch (...) {
        errors[i] = std::current_exception();
      }
    });
  }
  for (auto& w : workers) w.join();
  for (const auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }

  TrainSummary summary;
  summary.seeds = results;
  std::vector<double> accs, cosines;
  std::ostringstream csv;
  csv << "seed,test_accuracy,best_val_accuracy,best_epoch,glimpse_cosine\n" << std::setprecision(17);
  for (const auto& r : results) {
    accs.push_back(r.test_accuracy);
    if (r.glimpse_cosine) cosines.push_back(*r.glimpse_cosine);
    csv << r.seed << ',' << r.test_accuracy << ',' << r.best_val_accuracy << ',' << r.best_epoch
        << ',';
    if (r.glimpse_cosine) csv << *r.glimpse_cosine;
    csv << '\n';
  }
  std::tie(summary.mean_test_accuracy, summary.std_test_accuracy) = mean_std(accs);
  write_file(out / "summary.csv", csv.str());

  std::ostringstream txt;
  txt << "arch = " << to_string(model_cfg.arch) << "\nintra_attention = "
      << (model_cfg.intra_attention ? "true" : "false") << "\northogonality = "
      << (cfg.train.orthogonality ? "true" : "false") << "\nseeds = " << results.size()
      << "\ntest_accuracy = " << format_percent(summary.mean_test_accuracy, summary.std_test_accuracy)
      << '\n';
  if (!cosines.empty()) {
    const auto [m, s] = mean_std(cosines);
    txt << std::setprecision(6) << "glimpse_cosine = " << m << " ± " << s << '\n';
  }
  write_file(out / "summary.txt", txt.str());
  write_file(out / "config.ini", to_ini(cfg));
  json manifest = {{"format_version", 1},
                   {"model_hash", hex(model_cfg.hash())},
                   {"task_hash", hex(cfg.task.hash())},
                   {"seeds", cfg.seeds},
                   {"created_at", timestamp()}};
  write_file(out / "manifest.json", manifest.dump(2) + "\n");
  log << txt.str();
  return summary;
}

void cmd_cost(const ExperimentConfig& cfg, const std::optional<Sweep>& sweep, std::ostream& log) {
  FusionConfig omni = cfg.model;
  omni.arch = Architecture::kOmniban;
  FusionConfig coat = cfg.model;
  coat.arch = Architecture::kCoattention;
  omni.validate();
  coat.validate();
  const fs::path out(cfg.out_dir);
  ensure_dir(out);

  const CostReport a = build_cost_report(omni, cfg.cost_n_v, cfg.cost_n_q);
  const CostReport b = build_cost_report(coat, cfg.cost_n_v, cfg.cost_n_q);
  const Comparison cmp = compare(a, b);
  write_table(log, cmp);
  for (const auto* rep : {&a, &b}) {
    for (const auto& w : rep->analytic.warnings) log << "warning: " << w << '\n';
  }
  auto deviation = [](double got, double published) {
    std::ostringstream os;
    os << std::fixed << std::setprecision(3) << got / 1e6 << "M vs published " << published
       << "M (" << std::showpos << std::setprecision(1) << 100.0 * (got / 1e6 - published) / published
       << "%)";
    return os.str();
  };
  log << "diagnostic, omniban parameters: "
      << deviation(static_cast<double>(a.parameters), PublishedEfficiency::kOmnibanParamsM) << '\n'
      << "diagnostic, coattention parameters: "
      << deviation(static_cast<double>(b.parameters), PublishedEfficiency::kCoattentionParamsM) << '\n'
      << "diagnostic, omniban flops: "
      << deviation(static_cast<double>(a.flops.total_flops()), PublishedEfficiency::kOmnibanFlopsM)
      << '\n'
      << "diagnostic, coattention flops: "
      << deviation(static_cast<double>(b.flops.total_flops()), PublishedEfficiency::kCoattentionFlopsM)
      << '\n';
  std::ostringstream csv;
  write_csv(csv, cmp);
  write_file(out / "cost.csv", csv.str());

  if (!sweep) return;
  std::string key = sweep->key;
  for (auto& ch : key) ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
  if (key.rfind("cost.", 0) == 0) key = key.substr(5);
  if (key != "n_q" && key != "n_v") throw ConfigError("cost sweeps take N_q or N_v, got '" + sweep->key + "'");
  std::vector<std::size_t> values;
  for (const auto& v : sweep->values) values.push_back(parse_size(sweep->key, v));

  std::ostringstream table;
  table << key << ",omniban_analytic,omniban_flops,coattention_analytic,coattention_flops\n"
        << std::setprecision(17);
  std::vector<double> xs, oa, of, ca, cf;
  Rng rng_o = Rng(0).split("cost_model"), rng_c = Rng(0).split("cost_model");
  const Model mo(omni, rng_o), mc(coat, rng_c);
  for (auto v : values) {
    const std::size_t n_v = key == "n_v" ? v : cfg.cost_n_v;
    const std::size_t n_q = key == "n_q" ? v : cfg.cost_n_q;
    const Example ex_o = reference_example(omni, n_v, n_q), ex_c = reference_example(coat, n_v, n_q);
    xs.push_back(static_cast<double>(v));
    oa.push_back(analytic_cost(omni, n_v, n_q).total());
    of.push_back(static_cast<double>(measure_flops(mo, ex_o).total_flops()));
    ca.push_back(analytic_cost(coat, n_v, n_q).total());
    cf.push_back(static_cast<double>(measure_flops(mc, ex_c).total_flops()));
    table << v << ',' << oa.back() << ',' << of.back() << ',' << ca.back() << ',' << cf.back() << '\n';
  }
  write_file(out / "scaling.csv", table.str());
  log << "\nscaling over " << sweep->key << '\n' << table.str();
  if (xs.size() >= 2) {
    log << std::fixed << std::setprecision(4) << "log-log slope omniban: analytic "
        << loglog_slope(xs, oa) << ", measured " << loglog_slope(xs, of) << '\n'
        << "log-log slope coattention: analytic " << loglog_slope(xs, ca) << ", measured "
        << loglog_slope(xs, cf) << '\n';
    log.unsetf(std::ios::fixed);
  }
}

bool cmd_gradcheck(const ExperimentConfig& cfg, std::ostream& log) {
  const GradcheckReport report =
      run_gradcheck(cfg.seeds.front(), std::max<std::size_t>(cfg.gradcheck_seeds, 1));
  for (const auto& line : report.lines) {
    log << std::left << std::setw(10) << to_string(line.group) << std::setw(28) << line.name
        << std::scientific << std::setprecision(3) << line.worst_error << "  "
        << (line.passed ? "ok" : "FAIL") << '\n';
  }
  log.unsetf(std::ios::scientific);
  if (report.all_passed()) {
    log << "all checks passed\n";
  } else {
    log << "gradient check FAILED:";
    for (const auto& line : report.lines) {
      if (!line.passed) log << ' ' << line.name;
    }
    log << '\n';
  }
  return report.all_passed();
}

}  // namespace omniban::cli
