#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "omniban/attention.hpp"
#include "omniban/bilinear.hpp"
#include "omniban/encoder_stub.hpp"

namespace omniban {

enum class Architecture { kOmniban, kCoattention, kConcatLinear };

std::string_view to_string(Architecture arch);
Architecture parse_architecture(std::string_view name);

/// Architectural hyperparameters. Defaults are the reference configuration
/// used for cost comparisons.
struct FusionConfig {
  Architecture arch = Architecture::kOmniban;
  /// Width of the stubbed encoder's hidden output fed to the image
  /// projection; 0 feeds image features of width d_v straight through.
  std::size_t image_input_dim = 768;
  std::size_t d_v = 512;
  std::size_t d_q = 768;
  std::size_t d_m = 256;
  std::size_t heads = 8;
  std::size_t glimpses = 5;
  std::size_t coattention_layers = 5;
  std::size_t ffn_expansion = 4;
  std::size_t answers = 458;
  /// 0 selects twice the joint-representation width.
  std::size_t classifier_hidden = 0;
  double dropout = 0.0;
  bool intra_attention = true;
  /// Adds x to the intra-modal attention output. Off by default.
  bool intra_residual = false;

  void validate() const;
  std::size_t image_width() const { return image_input_dim ? image_input_dim : d_v; }
  std::size_t joint_dim() const;
  std::size_t hidden_dim() const;
  std::string canonical() const;
  static FusionConfig from_canonical(std::string_view text);
  std::uint64_t hash() const;
};

struct FeedForwardParams {
  LinearParams up;
  LinearParams down;
};

struct CoattentionLayerParams {
  MultiHeadAttentionParams image_cross;     // image queries over question tokens
  MultiHeadAttentionParams question_cross;  // question queries over image rows
  FeedForwardParams image_ffn;
  FeedForwardParams question_ffn;
};

struct ClassifierParams {
  std::optional<LinearParams> hidden;  // absent for the concat-linear control
  LinearParams output;
};

struct ForwardOutput {
  Var logits;                          // [1 x answers]
  std::optional<GlimpseBundle> bundle;  // OMniBAN only
};

/// One of the three fusion architectures with its parameters. Copies are
/// deep (tensors are immutable values).
class Model {
 public:
  Model(FusionConfig config, Rng& rng);

  const FusionConfig& config() const { return config_; }

  /// Visits every parameter tensor in a fixed order.
  void visit_parameters(const ParamVisitor& f);
  void visit_parameters(const ConstParamVisitor& f) const;

  ForwardOutput forward(Tape& tape, const Example& example, Rng* dropout_rng = nullptr) const;
  ForwardOutput forward(Tape& tape, const ModalityFeatures& image,
                        const ModalityFeatures& question, Rng* dropout_rng = nullptr) const;

  /// Parameters whose names start with these prefixes are encoder projection
  /// or classifier weights, shared by every architecture.
  static bool is_shared_head(const std::string& name);

  std::optional<LinearParams> image_projection;
  std::optional<MultiHeadAttentionParams> image_attention;
  std::optional<MultiHeadAttentionParams> question_attention;
  std::optional<BilinearParams> bilinear;
  std::vector<CoattentionLayerParams> coattention;
  ClassifierParams classifier;

 private:
  FusionConfig config_;
};

ForwardOutput forward_omniban(const Model& model, Tape& tape, const ModalityFeatures& image,
                              const ModalityFeatures& question, Rng* dropout_rng = nullptr);
Var forward_coattention(const Model& model, Tape& tape, const ModalityFeatures& image,
                        const ModalityFeatures& question, Rng* dropout_rng = nullptr);
Var forward_concat(const Model& model, Tape& tape, const ModalityFeatures& image,
                   const ModalityFeatures& question);

/// Argmax with ties going to the lowest index.
std::size_t predict(const Tensor& logits);

/// alpha(step) = alpha_max * step / final_step, clamped to [0, alpha_max].
struct AlphaSchedule {
  double alpha_max = 0.5;
  std::size_t final_step = 1;

  double at(std::size_t step) const;
};

/// main + alpha(step) * ortho
Var total_loss(Var main, Var ortho, std::size_t step, const AlphaSchedule& schedule);

}  // namespace omniban
