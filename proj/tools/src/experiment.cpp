#include "omniban_cli/experiment.hpp"

#include <boost/property_tree/ini_parser.hpp>
#include <boost/property_tree/ptree.hpp>
#include <charconv>
#include <fstream>
#include <functional>
#include <sstream>

#include "omniban/errors.hpp"

namespace omniban::cli {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

std::uint64_t to_u64(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  std::uint64_t v = 0;
  const auto [ptr, ec] = std::from_chars(t.data(), t.data() + t.size(), v);
  if (ec != std::errc() || ptr != t.data() + t.size() || t.empty()) {
    throw ConfigError(key + ": expected a non-negative integer, got '" + text + "'");
  }
  return v;
}

double to_double(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  try {
    std::size_t used = 0;
    const double v = std::stod(t, &used);
    if (used != t.size()) throw std::invalid_argument("trailing");
    return v;
  } catch (const std::exception&) {
    throw ConfigError(key + ": expected a number, got '" + text + "'");
  }
}

bool to_bool(const std::string& key, const std::string& text) {
  const std::string t = trim(text);
  if (t == "true" || t == "1" || t == "yes" || t == "on") return true;
  if (t == "false" || t == "0" || t == "no" || t == "off") return false;
  throw ConfigError(key + ": expected a boolean, got '" + text + "'");
}

std::string fmt(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(ExperimentConfig&, const std::string&)> set;
  std::function<std::string(const ExperimentConfig&)> get;
};

// Keys in file order. Sections and keys are fixed; anything else is rejected.
const std::vector<std::pair<std::string, Field>>& fields() {
  using C = ExperimentConfig;
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    auto sz = [&t](std::string key, std::function<std::size_t&(C&)> ref) {
      t.emplace_back(key, Field{[key, ref](C& c, const std::string& v) { ref(c) = to_u64(key, v); },
                                [ref](const C& c) { return std::to_string(ref(const_cast<C&>(c))); }});
    };
    auto dbl = [&t](std::string key, std::function<double&(C&)> ref) {
      t.emplace_back(key, Field{[key, ref](C& c, const std::string& v) { ref(c) = to_double(key, v); },
                                [ref](const C& c) { return fmt(ref(const_cast<C&>(c))); }});
    };
    auto boolean = [&t](std::string key, std::function<bool&(C&)> ref) {
      t.emplace_back(key, Field{[key, ref](C& c, const std::string& v) { ref(c) = to_bool(key, v); },
                                [ref](const C& c) {
                                  return std::string(ref(const_cast<C&>(c)) ? "true" : "false");
                                }});
    };
    t.emplace_back("model.arch",
                   Field{[](C& c, const std::string& v) { c.model.arch = parse_architecture(trim(v)); },
                         [](const C& c) { return std::string(to_string(c.model.arch)); }});
    t.emplace_back("model.image_input_dim",
                   Field{[](C& c, const std::string& v) {
                           c.explicit_image_input_dim = to_u64("model.image_input_dim", v);
                           c.model.image_input_dim = *c.explicit_image_input_dim;
                         },
                         [](const C& c) { return std::to_string(c.model.image_input_dim); }});
    sz("model.d_v", [](C& c) -> std::size_t& { return c.model.d_v; });
    t.emplace_back("model.d_q", Field{[](C& c, const std::string& v) {
                                        c.explicit_d_q = to_u64("model.d_q", v);
                                        c.model.d_q = *c.explicit_d_q;
                                      },
                                      [](const C& c) { return std::to_string(c.model.d_q); }});
    sz("model.d_m", [](C& c) -> std::size_t& { return c.model.d_m; });
    sz("model.heads", [](C& c) -> std::size_t& { return c.model.heads; });
    sz("model.glimpses", [](C& c) -> std::size_t& { return c.model.glimpses; });
    sz("model.coattention_layers", [](C& c) -> std::size_t& { return c.model.coattention_layers; });
    sz("model.ffn_expansion", [](C& c) -> std::size_t& { return c.model.ffn_expansion; });
    t.emplace_back("model.answers", Field{[](C& c, const std::string& v) {
                                            c.explicit_answers = to_u64("model.answers", v);
                                            c.model.answers = *c.explicit_answers;
                                          },
                                          [](const C& c) { return std::to_string(c.model.answers); }});
    sz("model.classifier_hidden", [](C& c) -> std::size_t& { return c.model.classifier_hidden; });
    dbl("model.dropout", [](C& c) -> double& { return c.model.dropout; });
    boolean("model.intra_attention", [](C& c) -> bool& { return c.model.intra_attention; });
    boolean("model.intra_residual", [](C& c) -> bool& { return c.model.intra_residual; });

    dbl("train.learning_rate", [](C& c) -> double& { return c.train.learning_rate; });
    sz("train.batch_size", [](C& c) -> std::size_t& { return c.train.batch_size; });
    sz("train.epochs", [](C& c) -> std::size_t& { return c.train.epochs; });
    dbl("train.alpha_max", [](C& c) -> double& { return c.train.alpha_max; });
    boolean("train.orthogonality", [](C& c) -> bool& { return c.train.orthogonality; });
    dbl("train.validation_fraction", [](C& c) -> double& { return c.train.validation_fraction; });
    sz("train.checkpoint_every", [](C& c) -> std::size_t& { return c.train.checkpoint_every; });

    sz("task.image_concepts", [](C& c) -> std::size_t& { return c.task.image_concepts; });
    sz("task.question_concepts", [](C& c) -> std::size_t& { return c.task.question_concepts; });
    sz("task.answers", [](C& c) -> std::size_t& { return c.task.answers; });
    dbl("task.noise", [](C& c) -> double& { return c.task.noise; });
    sz("task.image_dim", [](C& c) -> std::size_t& { return c.task.image_dim; });
    sz("task.question_dim", [](C& c) -> std::size_t& { return c.task.question_dim; });
    sz("task.max_len", [](C& c) -> std::size_t& { return c.task.max_len; });
    sz("task.min_len", [](C& c) -> std::size_t& { return c.task.min_len; });
    sz("task.distractors", [](C& c) -> std::size_t& { return c.task.distractors; });
    t.emplace_back("task.seed", Field{[](C& c, const std::string& v) { c.task.seed = to_u64("task.seed", v); },
                                      [](const C& c) { return std::to_string(c.task.seed); }});

    sz("data.n_train", [](C& c) -> std::size_t& { return c.n_train; });
    sz("data.n_test", [](C& c) -> std::size_t& { return c.n_test; });
    t.emplace_back("data.dir", Field{[](C& c, const std::string& v) { c.data_dir = trim(v); },
                                     [](const C& c) { return c.data_dir; }});

    t.emplace_back("run.out", Field{[](C& c, const std::string& v) { c.out_dir = trim(v); },
                                    [](const C& c) { return c.out_dir; }});
    t.emplace_back("run.seeds", Field{[](C& c, const std::string& v) { c.seeds = parse_seed_list(v); },
                                      [](const C& c) {
                                        std::string s;
                                        for (auto x : c.seeds) s += (s.empty() ? "" : ",") + std::to_string(x);
                                        return s;
                                      }});
    sz("run.gradcheck_seeds", [](C& c) -> std::size_t& { return c.gradcheck_seeds; });
    sz("cost.n_v", [](C& c) -> std::size_t& { return c.cost_n_v; });
    sz("cost.n_q", [](C& c) -> std::size_t& { return c.cost_n_q; });
    return t;
  }();
  return table;
}

const Field& find_field(const std::string& key) {
  for (const auto& [k, f] : fields()) {
    if (k == key) return f;
  }
  throw ConfigError("unknown config key '" + key + "'");
}

}  // namespace

FusionConfig ExperimentConfig::model_for_task() const {
  FusionConfig m = model;
  auto tie = [](const char* what, const std::optional<std::size_t>& given, std::size_t from_task,
                std::size_t& slot) {
    if (given && *given != from_task) {
      throw ConfigError(std::string("model.") + what + " = " + std::to_string(*given) +
                        " disagrees with the task's " + std::to_string(from_task));
    }
    slot = from_task;
  };
  tie("image_input_dim", explicit_image_input_dim, task.image_dim, m.image_input_dim);
  tie("d_q", explicit_d_q, task.question_dim, m.d_q);
  tie("answers", explicit_answers, task.answers, m.answers);
  return m;
}

void ExperimentConfig::validate() const {
  model.validate();
  train.validate();
  task.validate();
  if (n_train == 0 || n_test == 0) throw ConfigError("data.n_train and data.n_test must be > 0");
  if (seeds.empty()) throw ConfigError("run.seeds must list at least one seed");
  if (cost_n_v == 0 || cost_n_q == 0) throw ConfigError("cost.n_v and cost.n_q must be > 0");
  if (out_dir.empty()) throw ConfigError("run.out must not be empty");
}

ExperimentConfig default_experiment() {
  ExperimentConfig c;
  // Training widths follow the synthetic task.
  c.model.image_input_dim = c.task.image_dim;
  c.model.d_q = c.task.question_dim;
  c.model.answers = c.task.answers;
  return c;
}

ExperimentConfig parse_experiment(std::istream& in) {
  boost::property_tree::ptree tree;
  try {
    boost::property_tree::read_ini(in, tree);
  } catch (const boost::property_tree::ini_parser_error& e) {
    throw ConfigError(std::string("malformed config: ") + e.message() + " (line " +
                      std::to_string(e.line()) + ")");
  }
  ExperimentConfig cfg = default_experiment();
  for (const auto& [section, body] : tree) {
    if (body.empty()) throw ConfigError("key '" + section + "' must sit inside a [section]");
    for (const auto& [key, value] : body) {
      find_field(section + "." + key).set(cfg, value.data());
    }
  }
  return cfg;
}

ExperimentConfig load_experiment(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config '" + path + "'");
  return parse_experiment(in);
}

void apply_override(ExperimentConfig& cfg, const std::string& dotted_key, const std::string& value) {
  find_field(dotted_key).set(cfg, value);
}

std::string to_ini(const ExperimentConfig& cfg) {
  std::ostringstream os;
  std::string section;
  for (const auto& [key, field] : fields()) {
    const auto dot = key.find('.');
    const std::string s = key.substr(0, dot);
    if (s != section) {
      os << (section.empty() ? "" : "\n") << '[' << s << "]\n";
      section = s;
    }
    // Task-tied widths are written only when set explicitly, so the file
    // parses back to the same tie state.
    if ((key == "model.image_input_dim" && !cfg.explicit_image_input_dim) ||
        (key == "model.d_q" && !cfg.explicit_d_q) || (key == "model.answers" && !cfg.explicit_answers)) {
      continue;
    }
    os << key.substr(dot + 1) << " = " << field.get(cfg) << '\n';
  }
  return os.str();
}

std::vector<std::uint64_t> parse_seed_list(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  std::istringstream is(text);
  std::string item;
  while (std::getline(is, item, ',')) seeds.push_back(to_u64("seed", item));
  if (seeds.empty()) throw ConfigError("empty seed list");
  return seeds;
}

Sweep parse_sweep(const std::string& text) {
  const auto eq = text.find('=');
  if (eq == std::string::npos || eq == 0) throw ConfigError("--sweep expects KEY=V1,V2,...");
  Sweep s;
  s.key = trim(text.substr(0, eq));
  std::istringstream is(text.substr(eq + 1));
  std::string item;
  while (std::getline(is, item, ',')) s.values.push_back(trim(item));
  if (s.values.empty()) throw ConfigError("--sweep lists no values");
  return s;
}

}  // namespace omniban::cli
