#include "omniban/encoder_stub.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>

#include <nlohmann/json.hpp>

#include "omniban/errors.hpp"

namespace omniban {

std::size_t ModalityFeatures::valid_count() const {
  return static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
}

void ModalityFeatures::validate() const {
  if (matrix.rank() != 2) throw DimensionError("features must be a matrix, got " + to_string(matrix.shape()));
  if (mask.size() != matrix.rows()) {
    throw DimensionError("mask length " + std::to_string(mask.size()) + " does not match " +
                         std::to_string(matrix.rows()) + " tokens");
  }
  if (valid_count() == 0) throw MaskError("features have no valid token");
}

ModalityFeatures image_features(Tensor matrix) {
  const std::size_t n = matrix.rows();
  return {std::move(matrix), std::vector<bool>(n, true), Modality::kImage};
}

void SyntheticTaskSpec::validate() const {
  if (image_concepts == 0 || question_concepts == 0) throw ConfigError("concept counts must be positive");
  if (answers == 0) throw ConfigError("answer vocabulary must be non-empty");
  if (image_dim == 0 || question_dim == 0) throw ConfigError("feature dimensions must be positive");
  if (min_len == 0 || min_len > max_len) throw ConfigError("need 1 <= min_len <= max_len");
  if (distractors == 0) throw ConfigError("distractor pool must be non-empty");
  if (!(noise >= 0.0) || !std::isfinite(noise)) throw ConfigError("noise must be finite and >= 0");
}

std::string SyntheticTaskSpec::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "image_concepts=" << image_concepts << ";question_concepts=" << question_concepts
     << ";answers=" << answers << ";noise=" << noise << ";image_dim=" << image_dim
     << ";question_dim=" << question_dim << ";max_len=" << max_len << ";min_len=" << min_len
     << ";distractors=" << distractors << ";seed=" << seed;
  return os.str();
}

std::uint64_t SyntheticTaskSpec::hash() const { return fnv1a(canonical()); }

namespace {

// Entropy (nats) of the answer given one concept held fixed, minimised over
// that concept's values.
double min_conditional_entropy(const std::vector<std::size_t>& rules, std::size_t rows,
                               std::size_t cols, bool fix_row) {
  double best = std::numeric_limits<double>::infinity();
  const std::size_t outer = fix_row ? rows : cols;
  const std::size_t inner = fix_row ? cols : rows;
  for (std::size_t a = 0; a < outer; ++a) {
    std::map<std::size_t, std::size_t> freq;
    for (std::size_t b = 0; b < inner; ++b) {
      ++freq[fix_row ? rules[a * cols + b] : rules[b * cols + a]];
    }
    double h = 0.0;
    for (const auto& [_, c] : freq) {
      const double p = static_cast<double>(c) / static_cast<double>(inner);
      h -= p * std::log(p);
    }
    best = std::min(best, h);
  }
  return best;
}

}  // namespace

SyntheticTask::SyntheticTask(SyntheticTaskSpec spec) : spec_(spec) {
  spec_.validate();
  Rng root(spec_.seed);
  Rng emb = root.split("embeddings");
  image_emb_ = emb.split("image").normal_tensor({spec_.image_concepts, spec_.image_dim}, 1.0);
  question_emb_ =
      emb.split("question").normal_tensor({spec_.question_concepts, spec_.question_dim}, 1.0);
  distractor_emb_ =
      emb.split("distractor").normal_tensor({spec_.distractors, spec_.question_dim}, 1.0);

  // Cyclic Latin block (i + j) mod K, offset by the image concept parity so
  // the whole vocabulary is reached, then relabelled by a seeded permutation.
  const std::size_t cv = spec_.image_concepts, cq = spec_.question_concepts, na = spec_.answers;
  const std::size_t k = std::min(na, std::max(cv, cq));
  const std::size_t reps = (na + k - 1) / k;
  std::vector<std::size_t> relabel(na);
  for (std::size_t a = 0; a < na; ++a) relabel[a] = a;
  Rng perm = root.split("rules");
  perm.shuffle(relabel);
  rules_.resize(cv * cq);
  for (std::size_t i = 0; i < cv; ++i) {
    for (std::size_t j = 0; j < cq; ++j) {
      rules_[i * cq + j] = relabel[((i + j) % k + k * (i % reps)) % na];
    }
  }

  if (cv * cq >= na) {
    std::vector<bool> seen(na, false);
    for (auto a : rules_) seen[a] = true;
    if (std::find(seen.begin(), seen.end(), false) != seen.end()) {
      throw ConfigError("rule table does not cover the answer vocabulary");
    }
  }
  if (cv > 1 && cq > 1) {
    if (min_conditional_entropy(rules_, cv, cq, true) <= 0.0 ||
        min_conditional_entropy(rules_, cv, cq, false) <= 0.0) {
      throw ConfigError("rule table is determined by a single concept");
    }
  }
}

std::size_t SyntheticTask::answer_for(std::size_t image_concept,
                                      std::size_t question_concept) const {
  return rules_.at(image_concept * spec_.question_concepts + question_concept);
}

Example generate_example(const SyntheticTask& task, Rng& rng) {
  const auto& s = task.spec();
  const std::size_t ic = rng.below(s.image_concepts);
  const std::size_t qc = rng.below(s.question_concepts);
  const std::size_t len = s.min_len + rng.below(s.max_len - s.min_len + 1);
  const std::size_t pos = rng.below(len);

  std::vector<double> image(s.image_dim);
  const auto ie = task.image_embeddings().data();
  for (std::size_t c = 0; c < s.image_dim; ++c) {
    image[c] = ie[ic * s.image_dim + c] + s.noise * rng.normal();
  }

  std::vector<double> question(s.max_len * s.question_dim, 0.0);
  std::vector<bool> mask(s.max_len, false);
  const auto qe = task.question_embeddings().data();
  const auto de = task.distractor_embeddings().data();
  for (std::size_t t = 0; t < len; ++t) {
    mask[t] = true;
    const double* src = t == pos ? &qe[qc * s.question_dim]
                                 : &de[rng.below(s.distractors) * s.question_dim];
    for (std::size_t c = 0; c < s.question_dim; ++c) {
      question[t * s.question_dim + c] = src[c] + s.noise * rng.normal();
    }
  }

  Example ex;
  ex.image = image_features(Tensor({1, s.image_dim}, std::move(image)));
  ex.question = {Tensor({s.max_len, s.question_dim}, std::move(question)), std::move(mask),
                 Modality::kQuestion};
  ex.answer = task.answer_for(ic, qc);
  return ex;
}

Tensor one_hot(std::size_t index, std::size_t size) {
  if (index >= size) throw DimensionError("one_hot index out of range");
  std::vector<double> v(size, 0.0);
  v[index] = 1.0;
  return Tensor({1, size}, std::move(v));
}

Dataset make_dataset(const SyntheticTaskSpec& spec, std::size_t n_train, std::size_t n_test,
                     const Rng& rng) {
  if (n_train == 0 || n_test == 0) throw ConfigError("n_train and n_test must be positive");
  const SyntheticTask task(spec);
  Dataset ds;
  ds.answers = spec.answers;
  auto fill = [&task](std::vector<Example>& out, Rng stream, std::size_t n) {
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
      Rng ex_rng = stream.split(static_cast<std::uint64_t>(i));
      out.push_back(generate_example(task, ex_rng));
    }
  };
  fill(ds.train, rng.split("train"), n_train);
  fill(ds.test, rng.split("test"), n_test);
  return ds;
}

Var project_image(const LinearParams& proj, Var v_hid) { return apply(proj, v_hid); }

Tensor project_image(const LinearParams& proj, const Tensor& v_hid) {
  Tape tape(Tape::Mode::kInference);
  return project_image(proj, tape.constant(v_hid)).value();
}

void write_examples(std::ostream& os, const std::vector<Example>& examples) {
  for (const auto& ex : examples) {
    nlohmann::json rec;
    rec["image_vector"] = ex.image.matrix.to_vector();
    const std::size_t n = ex.question.tokens(), d = ex.question.width();
    const auto qv = ex.question.matrix.data();
    auto rows = nlohmann::json::array();
    for (std::size_t t = 0; t < n; ++t) {
      rows.push_back(std::vector<double>(qv.begin() + t * d, qv.begin() + (t + 1) * d));
    }
    rec["question_vectors"] = std::move(rows);
    rec["mask"] = ex.question.mask;
    rec["answer"] = ex.answer;
    os << rec.dump() << '\n';
  }
}

std::vector<Example> read_examples(std::istream& is) {
  std::vector<Example> out;
  std::string line;
  std::size_t lineno = 0;
  while (std::getline(is, line)) {
    ++lineno;
    if (line.empty()) continue;
    try {
      const auto rec = nlohmann::json::parse(line);
      auto image = rec.at("image_vector").get<std::vector<double>>();
      const auto rows = rec.at("question_vectors").get<std::vector<std::vector<double>>>();
      auto mask = rec.at("mask").get<std::vector<bool>>();
      if (rows.empty() || image.empty()) throw DimensionError("empty feature record");
      const std::size_t d = rows.front().size();
      std::vector<double> q;
      q.reserve(rows.size() * d);
      for (const auto& r : rows) {
        if (r.size() != d) throw DimensionError("ragged question_vectors");
        q.insert(q.end(), r.begin(), r.end());
      }
      Example ex;
      const std::size_t dv = image.size();
      ex.image = image_features(Tensor({1, dv}, std::move(image)));
      ex.question = {Tensor({rows.size(), d}, std::move(q)), std::move(mask), Modality::kQuestion};
      ex.question.validate();
      ex.answer = rec.at("answer").get<std::size_t>();
      out.push_back(std::move(ex));
    } catch (const nlohmann::json::exception& e) {
      throw IoError("malformed record on line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_examples(const std::string& path, const std::vector<Example>& examples) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("cannot open " + path + " for writing");
  write_examples(os, examples);
  if (!os) throw IoError("write failed for " + path);
}

std::vector<Example> load_examples(const std::string& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open " + path);
  return read_examples(is);
}

}  // namespace omniban
