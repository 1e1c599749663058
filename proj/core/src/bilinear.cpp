#include "omniban/bilinear.hpp"

#include "omniban/errors.hpp"

namespace omniban {

void BilinearParams::visit(const std::string& prefix, const ParamVisitor& f) {
  attention_image.visit(prefix + ".attention_image", f);
  attention_question.visit(prefix + ".attention_question", f);
  for (std::size_t g = 0; g < glimpses(); ++g) {
    const std::string gp = prefix + ".glimpse" + std::to_string(g);
    f(gp + ".scale", glimpse_scale[g]);
    image_glimpse[g].visit(gp + ".image", f);
    question_glimpse[g].visit(gp + ".question", f);
  }
  post.visit(prefix + ".post", f);
}

void BilinearParams::visit(const std::string& prefix, const ConstParamVisitor& f) const {
  attention_image.visit(prefix + ".attention_image", f);
  attention_question.visit(prefix + ".attention_question", f);
  for (std::size_t g = 0; g < glimpses(); ++g) {
    const std::string gp = prefix + ".glimpse" + std::to_string(g);
    f(gp + ".scale", glimpse_scale[g]);
    image_glimpse[g].visit(gp + ".image", f);
    question_glimpse[g].visit(gp + ".question", f);
  }
  post.visit(prefix + ".post", f);
}

BilinearParams make_bilinear(std::size_t d_v, std::size_t d_q, std::size_t d_m,
                             std::size_t glimpses, std::size_t d_joint, Rng& rng) {
  if (glimpses == 0) throw DimensionError("bilinear attention needs at least one glimpse");
  BilinearParams p;
  p.attention_image = make_linear(d_v, d_m, rng, false);
  p.attention_question = make_linear(d_q, d_m, rng, false);
  for (std::size_t g = 0; g < glimpses; ++g) {
    p.glimpse_scale.push_back(rng.uniform_tensor({1, d_m}, 0.5, 1.5));
    p.image_glimpse.push_back(make_linear(d_v, d_m, rng, false));
    p.question_glimpse.push_back(make_linear(d_q, d_m, rng, false));
  }
  p.post = make_linear(d_m, d_joint, rng);
  return p;
}

AttentionProjections project_for_attention(const BilinearParams& params, Var image, Var question) {
  return {apply(params.attention_image, image), apply(params.attention_question, question)};
}

std::vector<bool> pair_mask(const std::vector<bool>& image_mask,
                            const std::vector<bool>& question_mask) {
  std::vector<bool> keep;
  keep.reserve(image_mask.size() * question_mask.size());
  for (bool vi : image_mask) {
    for (bool qk : question_mask) keep.push_back(vi && qk);
  }
  return keep;
}

Var bilinear_attention_map(const BilinearParams& params, const AttentionProjections& proj,
                           const std::vector<bool>& pairs, std::size_t glimpse) {
  Tape& tape = proj.image.tape();
  const std::size_t nv = proj.image.shape()[0];
  const std::size_t nq = proj.question.shape()[0];
  if (pairs.size() != nv * nq) throw DimensionError("pair mask does not cover the N_v x N_q grid");
  const Var h = tape.parameter(params.glimpse_scale.at(glimpse));
  Var scores = matmul(mul(proj.image, h), transpose(proj.question));
  scores = reshape(scores, {1, nv * nq});
  bool any_masked = false;
  for (bool b : pairs) any_masked = any_masked || !b;
  if (any_masked) scores = mask_fill(scores, pairs);
  return reshape(softmax(scores, 1), {nv, nq});
}

Var bilinear_attention_map(const BilinearParams& params, Var image, Var question,
                           const std::vector<bool>& question_mask, std::size_t glimpse) {
  const std::vector<bool> image_mask(image.shape().at(0), true);
  return bilinear_attention_map(params, project_for_attention(params, image, question),
                                pair_mask(image_mask, question_mask), glimpse);
}

Var glimpse_features(const BilinearParams& params, Var image, Var question, Var attention,
                     std::size_t glimpse) {
  if (attention.shape() != Shape{image.shape().at(0), question.shape().at(0)}) {
    throw DimensionError("attention map " + to_string(attention.shape()) +
                         " does not match N_v x N_q");
  }
  const Var vg = apply(params.image_glimpse.at(glimpse), image);
  const Var qg = apply(params.question_glimpse.at(glimpse), question);
  return sum_rows(mul(vg, matmul(attention, qg)));
}

GlimpseBundle fuse(const BilinearParams& params, Var image, const std::vector<bool>& image_mask,
                   Var question, const std::vector<bool>& question_mask) {
  const auto proj = project_for_attention(params, image, question);
  const auto pairs = pair_mask(image_mask, question_mask);
  const std::size_t nv = image.shape()[0], nq = question.shape()[0];
  std::vector<Var> dists, feats;
  for (std::size_t g = 0; g < params.glimpses(); ++g) {
    const Var a = bilinear_attention_map(params, proj, pairs, g);
    dists.push_back(reshape(a, {1, nv * nq}));
    feats.push_back(glimpse_features(params, image, question, a, g));
  }
  const Var fused = dists.size() == 1 ? feats[0] : concat_rows(feats);
  GlimpseBundle bundle{dists.size() == 1 ? dists[0] : concat_rows(dists), fused,
                       sum_rows(apply(params.post, fused))};
  return bundle;
}

// rho_ab^2 is formed as G_ab^2 / (G_aa G_bb) from the Gram matrix G = P P^T
// rather than by normalising rows first, so identical rows give exactly 1.
Var orthogonality_loss(Var distributions) {
  if (distributions.shape().size() != 2) throw DimensionError("distributions must be a matrix");
  const std::size_t g = distributions.shape()[0], n = distributions.shape()[1];
  if (g == 0) throw DimensionError("orthogonality loss needs at least one glimpse");
  Tape& tape = distributions.tape();
  if (g == 1) return sum(scale(distributions, 0.0));
  const Var gram = matmul(distributions, transpose(distributions));
  const Var sq_norms = matmul(square(distributions), tape.constant(Tensor::full({n, 1}, 1.0)));
  Var denom = matmul(sq_norms, transpose(sq_norms));
  // A zero row has zero Gram entries; give it a unit denominator so it
  // contributes 0 instead of 0/0.
  std::vector<double> fix(g * g, 0.0);
  bool any_zero = false;
  for (std::size_t i = 0; i < g * g; ++i) {
    if (denom.value()[i] == 0.0) fix[i] = 1.0, any_zero = true;
  }
  if (any_zero) denom = add(denom, tape.constant(Tensor({g, g}, std::move(fix))));
  std::vector<double> upper(g * g, 0.0);
  for (std::size_t a = 0; a < g; ++a) {
    for (std::size_t b = a + 1; b < g; ++b) upper[a * g + b] = 1.0;
  }
  const Var rho_sq = div(square(gram), denom);
  return sum(mul(rho_sq, tape.constant(Tensor({g, g}, std::move(upper)))));
}

double orthogonality_loss(const Tensor& distributions) {
  Tape tape(Tape::Mode::kInference);
  return orthogonality_loss(tape.constant(distributions)).value().item();
}

}  // namespace omniban
