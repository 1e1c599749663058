#pragma once

#include <functional>
#include <optional>
#include <string>

#include "omniban/ops.hpp"
#include "omniban/rng.hpp"

namespace omniban {

using ParamVisitor = std::function<void(const std::string& name, Tensor& value)>;
using ConstParamVisitor = std::function<void(const std::string& name, const Tensor& value)>;

/// Dense layer weights: weight [d_in x d_out], optional bias [d_out].
struct LinearParams {
  Tensor weight;
  std::optional<Tensor> bias;

  std::size_t in_dim() const { return weight.rows(); }
  std::size_t out_dim() const { return weight.cols(); }

  void visit(const std::string& prefix, const ParamVisitor& f);
  void visit(const std::string& prefix, const ConstParamVisitor& f) const;
};

/// Uniform(-1/sqrt(d_in), 1/sqrt(d_in)) initialisation for weight and bias.
LinearParams make_linear(std::size_t d_in, std::size_t d_out, Rng& rng, bool with_bias = true);
LinearParams identity_linear(std::size_t dim, bool with_bias = true);

/// x . weight (+ bias), parameters bound on x's tape.
Var apply(const LinearParams& p, Var x);

}  // namespace omniban
