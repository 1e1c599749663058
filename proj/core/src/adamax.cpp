#include "omniban/adamax.hpp"

#include <algorithm>
#include <cmath>

#include "omniban/errors.hpp"

namespace omniban {

void Adamax::step(std::span<Tensor* const> params, std::span<const Tensor> grads) {
  if (params.size() != grads.size()) throw DimensionError("Adamax: params/grads count mismatch");
  if (m_.empty()) {
    for (const Tensor* p : params) {
      m_.emplace_back(p->size(), 0.0);
      u_.emplace_back(p->size(), 0.0);
    }
  }
  if (m_.size() != params.size()) throw DimensionError("Adamax: parameter list changed size");
  ++t_;
  const auto& o = options_;
  const double step_size = o.learning_rate / (1.0 - std::pow(o.beta1, static_cast<double>(t_)));
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto g = grads[i].data();
    const auto theta = params[i]->data();
    if (g.size() != theta.size() || m_[i].size() != theta.size()) {
      throw DimensionError("Adamax: gradient shape does not match parameter " + std::to_string(i));
    }
    auto& m = m_[i];
    auto& u = u_[i];
    std::vector<double> next(theta.begin(), theta.end());
    for (std::size_t k = 0; k < next.size(); ++k) {
      m[k] = o.beta1 * m[k] + (1.0 - o.beta1) * g[k];
      u[k] = std::max(o.beta2 * u[k], std::abs(g[k]));
      next[k] -= step_size * m[k] / (u[k] + o.eps);
    }
    *params[i] = Tensor(params[i]->shape(), std::move(next));
  }
}

}  // namespace omniban
