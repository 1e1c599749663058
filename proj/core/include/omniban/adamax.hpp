#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "omniban/tensor.hpp"

namespace omniban {

struct AdamaxOptions {
  double learning_rate = 5e-4;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

/// Adamax (Adam with an infinity-norm second moment):
///   m <- b1 m + (1 - b1) g
///   u <- max(b2 u, |g|)
///   theta <- theta - lr / (1 - b1^t) * m / (u + eps)
/// Parameters are addressed by position; the caller must pass them in the
/// same order every step.
class Adamax {
 public:
  explicit Adamax(AdamaxOptions options = {}) : options_(options) {}

  void step(std::span<Tensor* const> params, std::span<const Tensor> grads);

  const AdamaxOptions& options() const { return options_; }
  std::size_t steps() const { return t_; }
  const std::vector<std::vector<double>>& first_moments() const { return m_; }
  const std::vector<std::vector<double>>& infinity_norms() const { return u_; }

 private:
  AdamaxOptions options_;
  std::size_t t_ = 0;
  std::vector<std::vector<double>> m_;
  std::vector<std::vector<double>> u_;
};

}  // namespace omniban
