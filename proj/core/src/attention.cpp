#include "omniban/attention.hpp"

#include <algorithm>
#include <cmath>

#include "omniban/errors.hpp"

namespace omniban {

namespace {

bool all_valid(const std::vector<bool>& mask) {
  return std::all_of(mask.begin(), mask.end(), [](bool b) { return b; });
}

void check_heads(std::size_t d, std::size_t heads) {
  if (heads == 0 || d % heads != 0) {
    throw DimensionError("model width " + std::to_string(d) + " is not divisible by " +
                         std::to_string(heads) + " heads");
  }
}

}  // namespace

void MultiHeadAttentionParams::visit(const std::string& prefix, const ParamVisitor& f) {
  query.visit(prefix + ".query", f);
  key.visit(prefix + ".key", f);
  value.visit(prefix + ".value", f);
  output.visit(prefix + ".output", f);
}

void MultiHeadAttentionParams::visit(const std::string& prefix, const ConstParamVisitor& f) const {
  query.visit(prefix + ".query", f);
  key.visit(prefix + ".key", f);
  value.visit(prefix + ".value", f);
  output.visit(prefix + ".output", f);
}

MultiHeadAttentionParams make_attention(std::size_t d_query, std::size_t d_kv, std::size_t heads,
                                        Rng& rng) {
  check_heads(d_query, heads);
  MultiHeadAttentionParams p;
  p.query = make_linear(d_query, d_query, rng);
  p.key = make_linear(d_kv, d_query, rng);
  p.value = make_linear(d_kv, d_query, rng);
  p.output = make_linear(d_query, d_query, rng);
  p.heads = heads;
  return p;
}

MultiHeadAttentionParams identity_attention(std::size_t dim, std::size_t heads) {
  check_heads(dim, heads);
  return {identity_linear(dim), identity_linear(dim), identity_linear(dim), identity_linear(dim),
          heads};
}

Var attention_scores(Var q, Var k, double factor, const std::vector<bool>& key_mask) {
  const std::size_t nq = q.shape().at(0);
  const std::size_t nk = k.shape().at(0);
  if (q.shape().at(1) != k.shape().at(1)) {
    throw DimensionError("query/key widths disagree: " + to_string(q.shape()) + " vs " +
                         to_string(k.shape()));
  }
  if (key_mask.size() != nk) throw DimensionError("key mask length does not match key count");
  Var scores = scale(matmul(q, transpose(k)), factor);
  if (!all_valid(key_mask)) scores = mask_fill(scores, key_mask_pattern(nq, key_mask));
  return softmax(scores, 1);
}

Var multi_head_attention(const MultiHeadAttentionParams& params, Var queries,
                         const std::vector<bool>& query_mask, Var context,
                         const std::vector<bool>& context_mask) {
  const std::size_t d = params.model_dim();
  check_heads(d, params.heads);
  if (query_mask.size() != queries.shape().at(0) || context_mask.size() != context.shape().at(0)) {
    throw DimensionError("attention mask length does not match token count");
  }
  const Var q = apply(params.query, queries);
  const Var k = apply(params.key, context);
  const Var v = apply(params.value, context);
  const std::size_t dk = params.head_dim();
  const double inv_sqrt_dk = 1.0 / std::sqrt(static_cast<double>(dk));

  std::vector<Var> heads;
  heads.reserve(params.heads);
  for (std::size_t h = 0; h < params.heads; ++h) {
    const Var qh = params.heads == 1 ? q : slice_cols(q, h * dk, dk);
    const Var kh = params.heads == 1 ? k : slice_cols(k, h * dk, dk);
    const Var vh = params.heads == 1 ? v : slice_cols(v, h * dk, dk);
    heads.push_back(matmul(attention_scores(qh, kh, inv_sqrt_dk, context_mask), vh));
  }
  Var out = apply(params.output, heads.size() == 1 ? heads[0] : concat_cols(heads));
  if (!all_valid(query_mask)) out = mul(out, queries.tape().constant(mask_column(query_mask)));
  return out;
}

Var self_attend(const MultiHeadAttentionParams& params, Var x, const std::vector<bool>& mask) {
  return multi_head_attention(params, x, mask, x, mask);
}

Tensor self_attend(const ModalityFeatures& x, const MultiHeadAttentionParams& params) {
  x.validate();
  Tape tape(Tape::Mode::kInference);
  return self_attend(params, tape.constant(x.matrix), x.mask).value();
}

}  // namespace omniban
