#pragma once

#include <vector>

#include "omniban/layers.hpp"

namespace omniban {

/// Weights of the multi-glimpse low-rank bilinear attention.
///
/// Attention map of glimpse g over image rows j and question rows k:
///   S_g[j,k] = sum_m h_g[m] * (v_j W_v)_m * (q_k W_q)_m
///   P_g      = softmax over all valid (j,k) pairs jointly
/// Fused glimpse feature:
///   f_g[m] = sum_{j,k} P_g[j,k] * (v_j W_{v,g})_m * (q_k W_{q,g})_m
/// Joint representation: sum_g (f_g W_post + b_post).
struct BilinearParams {
  LinearParams attention_image;      // W_v: d_v x d_m, no bias
  LinearParams attention_question;   // W_q: d_q x d_m, no bias
  std::vector<Tensor> glimpse_scale;  // h_g: [1 x d_m] per glimpse
  std::vector<LinearParams> image_glimpse;     // W_{v,g}: d_v x d_m, no bias
  std::vector<LinearParams> question_glimpse;  // W_{q,g}: d_q x d_m, no bias
  LinearParams post;                           // d_m x d_joint, shared across glimpses

  std::size_t glimpses() const { return glimpse_scale.size(); }
  std::size_t shared_dim() const { return attention_image.out_dim(); }
  std::size_t joint_dim() const { return post.out_dim(); }

  void visit(const std::string& prefix, const ParamVisitor& f);
  void visit(const std::string& prefix, const ConstParamVisitor& f) const;
};

BilinearParams make_bilinear(std::size_t d_v, std::size_t d_q, std::size_t d_m,
                             std::size_t glimpses, std::size_t d_joint, Rng& rng);

/// Per-glimpse outputs of fuse().
struct GlimpseBundle {
  Var distributions;  // [glimpses x (N_v * N_q)]
  Var fused;          // [glimpses x d_m]
  Var joint;          // [1 x d_joint]
};

/// Shared projections v W_v and q W_q used by every glimpse's map.
struct AttentionProjections {
  Var image;
  Var question;
};

AttentionProjections project_for_attention(const BilinearParams& params, Var image, Var question);

/// Keep-pattern over the flattened (j,k) grid.
std::vector<bool> pair_mask(const std::vector<bool>& image_mask,
                            const std::vector<bool>& question_mask);

/// Glimpse g's distribution, shaped [N_v x N_q].
Var bilinear_attention_map(const BilinearParams& params, const AttentionProjections& proj,
                           const std::vector<bool>& pairs, std::size_t glimpse);
Var bilinear_attention_map(const BilinearParams& params, Var image, Var question,
                           const std::vector<bool>& question_mask, std::size_t glimpse);

/// f_g as [1 x d_m], computed in factorised order: both modalities are
/// projected to d_m first, so cost is O(N_v N_q d_m) past the projections.
Var glimpse_features(const BilinearParams& params, Var image, Var question, Var attention,
                     std::size_t glimpse);

GlimpseBundle fuse(const BilinearParams& params, Var image, const std::vector<bool>& image_mask,
                   Var question, const std::vector<bool>& question_mask);

/// Sum over unordered glimpse pairs g1 < g2 of (p_g1 . p_g2)^2 where each p
/// is its distribution row divided by its L2 norm. Zero for one glimpse.
Var orthogonality_loss(Var distributions);
double orthogonality_loss(const Tensor& distributions);

}  // namespace omniban
