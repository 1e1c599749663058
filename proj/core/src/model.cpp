#include "omniban/model.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>

#include "omniban/errors.hpp"

namespace omniban {

std::string_view to_string(Architecture arch) {
  switch (arch) {
    case Architecture::kOmniban: return "omniban";
    case Architecture::kCoattention: return "coattention";
    case Architecture::kConcatLinear: return "concat";
  }
  return "unknown";
}

Architecture parse_architecture(std::string_view name) {
  if (name == "omniban") return Architecture::kOmniban;
  if (name == "coattention") return Architecture::kCoattention;
  if (name == "concat" || name == "concat-linear") return Architecture::kConcatLinear;
  throw ConfigError("unknown architecture '" + std::string(name) + "'");
}

void FusionConfig::validate() const {
  if (d_v == 0 || d_q == 0 || d_m == 0 || answers == 0) {
    throw ConfigError("model dimensions must be positive");
  }
  if (heads == 0 || d_v % heads != 0 || d_q % heads != 0) {
    throw ConfigError("heads (" + std::to_string(heads) + ") must divide d_v (" +
                      std::to_string(d_v) + ") and d_q (" + std::to_string(d_q) + ")");
  }
  if (arch == Architecture::kOmniban && glimpses == 0) throw ConfigError("glimpses must be >= 1");
  if (arch == Architecture::kCoattention && ffn_expansion == 0) {
    throw ConfigError("ffn_expansion must be >= 1");
  }
  if (!(dropout >= 0.0 && dropout < 1.0)) throw ConfigError("dropout must lie in [0, 1)");
  if (intra_residual && !intra_attention) {
    throw ConfigError("intra_residual requires intra_attention");
  }
}

std::size_t FusionConfig::joint_dim() const {
  switch (arch) {
    case Architecture::kOmniban: return d_q;
    case Architecture::kCoattention:
    case Architecture::kConcatLinear: return d_v + d_q;
  }
  return d_q;
}

std::size_t FusionConfig::hidden_dim() const {
  return classifier_hidden ? classifier_hidden : 2 * joint_dim();
}

std::string FusionConfig::canonical() const {
  std::ostringstream os;
  os.precision(17);
  os << "arch=" << to_string(arch) << ";image_input_dim=" << image_input_dim << ";d_v=" << d_v
     << ";d_q=" << d_q << ";d_m=" << d_m << ";heads=" << heads << ";glimpses=" << glimpses
     << ";coattention_layers=" << coattention_layers << ";ffn_expansion=" << ffn_expansion
     << ";answers=" << answers << ";classifier_hidden=" << classifier_hidden
     << ";dropout=" << dropout << ";intra_attention=" << intra_attention
     << ";intra_residual=" << intra_residual;
  return os.str();
}

FusionConfig FusionConfig::from_canonical(std::string_view text) {
  std::map<std::string, std::string> kv;
  std::istringstream is{std::string(text)};
  std::string item;
  while (std::getline(is, item, ';')) {
    const auto eq = item.find('=');
    if (eq == std::string::npos) throw ConfigError("malformed config entry '" + item + "'");
    kv[item.substr(0, eq)] = item.substr(eq + 1);
  }
  auto take = [&kv](const char* key) {
    auto it = kv.find(key);
    if (it == kv.end()) throw ConfigError(std::string("config is missing '") + key + "'");
    std::string v = it->second;
    kv.erase(it);
    return v;
  };
  auto size = [&take](const char* key) { return static_cast<std::size_t>(std::stoull(take(key))); };
  FusionConfig c;
  c.arch = parse_architecture(take("arch"));
  c.image_input_dim = size("image_input_dim");
  c.d_v = size("d_v");
  c.d_q = size("d_q");
  c.d_m = size("d_m");
  c.heads = size("heads");
  c.glimpses = size("glimpses");
  c.coattention_layers = size("coattention_layers");
  c.ffn_expansion = size("ffn_expansion");
  c.answers = size("answers");
  c.classifier_hidden = size("classifier_hidden");
  c.dropout = std::stod(take("dropout"));
  c.intra_attention = take("intra_attention") == "1";
  c.intra_residual = take("intra_residual") == "1";
  if (!kv.empty()) throw ConfigError("unknown config key '" + kv.begin()->first + "'");
  c.validate();
  return c;
}

std::uint64_t FusionConfig::hash() const { return fnv1a(canonical()); }

Model::Model(FusionConfig config, Rng& rng) : config_(config) {
  config_.validate();
  const auto& c = config_;
  if (c.image_input_dim) image_projection = make_linear(c.image_input_dim, c.d_v, rng);
  const bool attends = c.arch != Architecture::kConcatLinear && c.intra_attention;
  if (attends) {
    image_attention = make_attention(c.d_v, c.d_v, c.heads, rng);
    question_attention = make_attention(c.d_q, c.d_q, c.heads, rng);
  }
  if (c.arch == Architecture::kOmniban) {
    bilinear = make_bilinear(c.d_v, c.d_q, c.d_m, c.glimpses, c.joint_dim(), rng);
  }
  if (c.arch == Architecture::kCoattention) {
    for (std::size_t l = 0; l < c.coattention_layers; ++l) {
      CoattentionLayerParams layer;
      layer.image_cross = make_attention(c.d_v, c.d_q, c.heads, rng);
      layer.question_cross = make_attention(c.d_q, c.d_v, c.heads, rng);
      layer.image_ffn = {make_linear(c.d_v, c.ffn_expansion * c.d_v, rng),
                         make_linear(c.ffn_expansion * c.d_v, c.d_v, rng)};
      layer.question_ffn = {make_linear(c.d_q, c.ffn_expansion * c.d_q, rng),
                            make_linear(c.ffn_expansion * c.d_q, c.d_q, rng)};
      coattention.push_back(std::move(layer));
    }
  }
  if (c.arch == Architecture::kConcatLinear) {
    classifier.output = make_linear(c.joint_dim(), c.answers, rng);
  } else {
    classifier.hidden = make_linear(c.joint_dim(), c.hidden_dim(), rng);
    classifier.output = make_linear(c.hidden_dim(), c.answers, rng);
  }
}

namespace {

template <typename ModelT, typename Visitor>
void visit_all(ModelT& m, const Visitor& f) {
  if (m.image_projection) m.image_projection->visit("image_projection", f);
  if (m.image_attention) m.image_attention->visit("image_attention", f);
  if (m.question_attention) m.question_attention->visit("question_attention", f);
  if (m.bilinear) m.bilinear->visit("bilinear", f);
  for (std::size_t l = 0; l < m.coattention.size(); ++l) {
    auto& layer = m.coattention[l];
    const std::string p = "coattention" + std::to_string(l);
    layer.image_cross.visit(p + ".image_cross", f);
    layer.question_cross.visit(p + ".question_cross", f);
    layer.image_ffn.up.visit(p + ".image_ffn.up", f);
    layer.image_ffn.down.visit(p + ".image_ffn.down", f);
    layer.question_ffn.up.visit(p + ".question_ffn.up", f);
    layer.question_ffn.down.visit(p + ".question_ffn.down", f);
  }
  if (m.classifier.hidden) m.classifier.hidden->visit("classifier.hidden", f);
  m.classifier.output.visit("classifier.output", f);
}

bool all_valid(const std::vector<bool>& mask) {
  return std::all_of(mask.begin(), mask.end(), [](bool b) { return b; });
}

Var zero_masked_rows(Var x, const std::vector<bool>& mask) {
  if (all_valid(mask)) return x;
  return mul(x, x.tape().constant(mask_column(mask)));
}

// [1 x d] mean over valid rows.
Var masked_mean(Var x, const std::vector<bool>& mask) {
  const double count = static_cast<double>(std::count(mask.begin(), mask.end(), true));
  std::vector<double> w(mask.size());
  for (std::size_t i = 0; i < mask.size(); ++i) w[i] = mask[i] ? 1.0 / count : 0.0;
  return matmul(x.tape().constant(Tensor({1, mask.size()}, std::move(w))), x);
}

struct Inputs {
  Var image;
  Var question;
};

Inputs prepare_inputs(const Model& model, Tape& tape, const ModalityFeatures& image,
                      const ModalityFeatures& question) {
  image.validate();
  question.validate();
  const auto& c = model.config();
  if (image.width() != c.image_width() || question.width() != c.d_q) {
    throw DimensionError("features " + to_string(image.matrix.shape()) + " / " +
                         to_string(question.matrix.shape()) + " do not match model widths " +
                         std::to_string(c.image_width()) + " / " + std::to_string(c.d_q));
  }
  Var v = tape.constant(image.matrix);
  if (model.image_projection) v = project_image(*model.image_projection, v);
  v = zero_masked_rows(v, image.mask);
  Var q = zero_masked_rows(tape.constant(question.matrix), question.mask);
  return {v, q};
}

Var refine(const std::optional<MultiHeadAttentionParams>& attn, bool residual, Var x,
           const std::vector<bool>& mask) {
  if (!attn) return x;
  Var out = self_attend(*attn, x, mask);
  return residual ? add(out, x) : out;
}

Var classify(const Model& model, Var joint, Rng* dropout_rng) {
  const auto& cls = model.classifier;
  if (!cls.hidden) return apply(cls.output, joint);
  Var h = relu(apply(*cls.hidden, joint));
  const double p = model.config().dropout;
  if (dropout_rng && p > 0.0) {
    std::vector<double> keep(h.value().size());
    for (auto& k : keep) k = dropout_rng->uniform() < p ? 0.0 : 1.0 / (1.0 - p);
    h = mul(h, joint.tape().constant(Tensor(h.shape(), std::move(keep))));
  }
  return apply(cls.output, h);
}

Var feed_forward(const FeedForwardParams& ffn, Var x) {
  return apply(ffn.down, relu(apply(ffn.up, x)));
}

}  // namespace

void Model::visit_parameters(const ParamVisitor& f) { visit_all(*this, f); }

void Model::visit_parameters(const ConstParamVisitor& f) const { visit_all(*this, f); }

bool Model::is_shared_head(const std::string& name) {
  return name.rfind("image_projection", 0) == 0 || name.rfind("classifier", 0) == 0;
}

ForwardOutput Model::forward(Tape& tape, const Example& example, Rng* dropout_rng) const {
  return forward(tape, example.image, example.question, dropout_rng);
}

ForwardOutput Model::forward(Tape& tape, const ModalityFeatures& image,
                             const ModalityFeatures& question, Rng* dropout_rng) const {
  switch (config_.arch) {
    case Architecture::kOmniban: return forward_omniban(*this, tape, image, question, dropout_rng);
    case Architecture::kCoattention:
      return {forward_coattention(*this, tape, image, question, dropout_rng), std::nullopt};
    case Architecture::kConcatLinear:
      return {forward_concat(*this, tape, image, question), std::nullopt};
  }
  throw ConfigError("unknown architecture");
}

ForwardOutput forward_omniban(const Model& model, Tape& tape, const ModalityFeatures& image,
                              const ModalityFeatures& question, Rng* dropout_rng) {
  if (!model.bilinear) throw ConfigError("model has no bilinear fusion");
  const bool residual = model.config().intra_residual;
  auto [v, q] = prepare_inputs(model, tape, image, question);
  v = refine(model.image_attention, residual, v, image.mask);
  q = refine(model.question_attention, residual, q, question.mask);
  GlimpseBundle bundle = fuse(*model.bilinear, v, image.mask, q, question.mask);
  Var logits = classify(model, bundle.joint, dropout_rng);
  return {logits, bundle};
}

Var forward_coattention(const Model& model, Tape& tape, const ModalityFeatures& image,
                        const ModalityFeatures& question, Rng* dropout_rng) {
  const bool residual = model.config().intra_residual;
  auto [v, q] = prepare_inputs(model, tape, image, question);
  v = refine(model.image_attention, residual, v, image.mask);
  q = refine(model.question_attention, residual, q, question.mask);
  for (const auto& layer : model.coattention) {
    const Var v_att = multi_head_attention(layer.image_cross, v, image.mask, q, question.mask);
    const Var q_att = multi_head_attention(layer.question_cross, q, question.mask, v, image.mask);
    v = add(v, v_att);
    q = add(q, q_att);
    v = zero_masked_rows(add(v, feed_forward(layer.image_ffn, v)), image.mask);
    q = zero_masked_rows(add(q, feed_forward(layer.question_ffn, q)), question.mask);
  }
  const std::vector<Var> pooled{masked_mean(v, image.mask), masked_mean(q, question.mask)};
  return classify(model, concat_cols(pooled), dropout_rng);
}

Var forward_concat(const Model& model, Tape& tape, const ModalityFeatures& image,
                   const ModalityFeatures& question) {
  auto [v, q] = prepare_inputs(model, tape, image, question);
  const std::vector<Var> pooled{masked_mean(v, image.mask), masked_mean(q, question.mask)};
  return classify(model, concat_cols(pooled), nullptr);
}

std::size_t predict(const Tensor& logits) {
  const auto v = logits.data();
  if (v.empty()) throw DimensionError("predict on empty vocabulary");
  std::size_t best = 0;
  for (std::size_t i = 1; i < v.size(); ++i) {
    if (v[i] > v[best]) best = i;
  }
  return best;
}

double AlphaSchedule::at(std::size_t step) const {
  if (final_step == 0) return 0.0;
  const double s = static_cast<double>(std::min(step, final_step));
  return alpha_max * s / static_cast<double>(final_step);
}

Var total_loss(Var main, Var ortho, std::size_t step, const AlphaSchedule& schedule) {
  return add(main, scale(ortho, schedule.at(step)));
}

}  // namespace omniban
