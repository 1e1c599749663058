#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <vector>

#include "omniban/layers.hpp"
#include "omniban/rng.hpp"
#include "omniban/tensor.hpp"

namespace omniban {

enum class Modality { kImage, kQuestion };

/// Feature matrix [N x d] with a validity mask (true = real token/region).
/// Padded rows are zero.
struct ModalityFeatures {
  Tensor matrix;
  std::vector<bool> mask;
  Modality modality = Modality::kQuestion;

  std::size_t tokens() const { return matrix.rows(); }
  std::size_t width() const { return matrix.cols(); }
  std::size_t valid_count() const;
  /// Throws DimensionError/MaskError on an inconsistent or empty mask.
  void validate() const;
};

ModalityFeatures image_features(Tensor matrix);

/// Stand-in for frozen encoders: a planted task whose answer depends on the
/// pair (image concept, question concept).
struct SyntheticTaskSpec {
  std::size_t image_concepts = 4;
  std::size_t question_concepts = 4;
  std::size_t answers = 8;
  double noise = 0.1;
  std::size_t image_dim = 512;
  std::size_t question_dim = 768;
  std::size_t max_len = 20;
  std::size_t min_len = 4;
  std::size_t distractors = 16;
  std::uint64_t seed = 0;

  void validate() const;
  /// Stable textual form; hashing it identifies the task.
  std::string canonical() const;
  std::uint64_t hash() const;
};

struct Example {
  ModalityFeatures image;
  ModalityFeatures question;
  std::size_t answer = 0;
};

/// Fixed embeddings and rule table derived from a spec.
class SyntheticTask {
 public:
  explicit SyntheticTask(SyntheticTaskSpec spec);

  const SyntheticTaskSpec& spec() const { return spec_; }
  std::size_t answer_for(std::size_t image_concept, std::size_t question_concept) const;
  const Tensor& image_embeddings() const { return image_emb_; }
  const Tensor& question_embeddings() const { return question_emb_; }
  const Tensor& distractor_embeddings() const { return distractor_emb_; }

 private:
  SyntheticTaskSpec spec_;
  Tensor image_emb_;
  Tensor question_emb_;
  Tensor distractor_emb_;
  std::vector<std::size_t> rules_;
};

/// Draws one example. Exactly one valid question token carries the question
/// concept; the rest are distractors; positions past the sampled length are
/// zero and masked out.
Example generate_example(const SyntheticTask& task, Rng& rng);

Tensor one_hot(std::size_t index, std::size_t size);

struct Dataset {
  std::vector<Example> train;
  std::vector<Example> test;
  std::size_t answers = 0;
};

/// Train and test streams come from independent child streams of `rng`.
Dataset make_dataset(const SyntheticTaskSpec& spec, std::size_t n_train, std::size_t n_test,
                     const Rng& rng);

/// v_hid [N_v x d_hid] -> [N_v x d_out] through a trainable projection.
Var project_image(const LinearParams& proj, Var v_hid);
Tensor project_image(const LinearParams& proj, const Tensor& v_hid);

// Line-delimited records:
// {"image_vector":[...],"question_vectors":[[...],...],"mask":[...],"answer":k}
void write_examples(std::ostream& os, const std::vector<Example>& examples);
std::vector<Example> read_examples(std::istream& is);
void save_examples(const std::string& path, const std::vector<Example>& examples);
std::vector<Example> load_examples(const std::string& path);

}  // namespace omniban
