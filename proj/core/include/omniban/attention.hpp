#pragma once

#include <vector>

#include "omniban/encoder_stub.hpp"
#include "omniban/layers.hpp"

namespace omniban {

/// Projections of one multi-head attention layer. Queries come from a
/// modality of width d_query; keys and values from a context of width d_kv
/// (equal for self-attention). All heads share the model width
/// d = d_query, split into heads of d/h.
struct MultiHeadAttentionParams {
  LinearParams query;   // d_query x d
  LinearParams key;     // d_kv x d
  LinearParams value;   // d_kv x d
  LinearParams output;  // d x d
  std::size_t heads = 8;

  std::size_t model_dim() const { return query.out_dim(); }
  std::size_t head_dim() const { return model_dim() / heads; }

  void visit(const std::string& prefix, const ParamVisitor& f);
  void visit(const std::string& prefix, const ConstParamVisitor& f) const;
};

MultiHeadAttentionParams make_attention(std::size_t d_query, std::size_t d_kv, std::size_t heads,
                                        Rng& rng);
/// Identity projections with zero biases.
MultiHeadAttentionParams identity_attention(std::size_t dim, std::size_t heads);

/// softmax(q . k^T * factor) with masked keys excluded. Rows sum to 1 over
/// valid keys; masked keys get exactly 0.
Var attention_scores(Var q, Var k, double factor, const std::vector<bool>& key_mask);

/// Multi-head scaled dot-product attention of `queries` over `context`,
/// heads concatenated and mapped by the output projection. Rows of masked
/// queries are zeroed.
Var multi_head_attention(const MultiHeadAttentionParams& params, Var queries,
                         const std::vector<bool>& query_mask, Var context,
                         const std::vector<bool>& context_mask);

Var self_attend(const MultiHeadAttentionParams& params, Var x, const std::vector<bool>& mask);
Tensor self_attend(const ModalityFeatures& x, const MultiHeadAttentionParams& params);

}  // namespace omniban
