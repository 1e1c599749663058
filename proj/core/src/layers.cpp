#include "omniban/layers.hpp"

#include <cmath>

namespace omniban {

void LinearParams::visit(const std::string& prefix, const ParamVisitor& f) {
  f(prefix + ".weight", weight);
  if (bias) f(prefix + ".bias", *bias);
}

void LinearParams::visit(const std::string& prefix, const ConstParamVisitor& f) const {
  f(prefix + ".weight", weight);
  if (bias) f(prefix + ".bias", *bias);
}

LinearParams make_linear(std::size_t d_in, std::size_t d_out, Rng& rng, bool with_bias) {
  const double bound = 1.0 / std::sqrt(static_cast<double>(d_in));
  LinearParams p;
  p.weight = rng.uniform_tensor({d_in, d_out}, -bound, bound);
  if (with_bias) p.bias = rng.uniform_tensor({d_out}, -bound, bound);
  return p;
}

LinearParams identity_linear(std::size_t dim, bool with_bias) {
  std::vector<double> eye(dim * dim, 0.0);
  for (std::size_t i = 0; i < dim; ++i) eye[i * dim + i] = 1.0;
  LinearParams p;
  p.weight = Tensor({dim, dim}, std::move(eye));
  if (with_bias) p.bias = Tensor::zeros({dim});
  return p;
}

Var apply(const LinearParams& p, Var x) {
  Tape& tape = x.tape();
  if (p.bias) return linear(x, tape.parameter(p.weight), tape.parameter(*p.bias));
  return linear(x, tape.parameter(p.weight));
}

}  // namespace omniban
