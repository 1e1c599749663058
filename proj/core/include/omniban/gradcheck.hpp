#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "omniban/model.hpp"
#include "omniban/tape.hpp"

namespace omniban {

inline constexpr double kGradcheckStep = 1e-5;
inline constexpr double kGradcheckTolerance = 1e-4;

/// A scalar-valued function of some owned tensors. `build` must bind every
/// checked tensor through tape.parameter() so that in-place replacement of
/// a tensor changes the next evaluation.
struct GradProblem {
  std::vector<Tensor*> checked;
  std::function<Var(Tape&)> build;
  std::shared_ptr<void> storage;  // keeps the tensors behind `checked` alive
};

struct GradcheckOutcome {
  double relative_error = 0.0;  // ||analytic - numeric|| / max(||analytic||, ||numeric||)
  std::size_t scalars = 0;
};

/// Central differences over every scalar of every checked tensor.
GradcheckOutcome check_gradients(GradProblem& problem, double step = kGradcheckStep);

enum class CaseGroup { kOp, kComposite, kModel };

struct GradCase {
  std::string name;
  CaseGroup group;
  std::function<GradProblem(std::uint64_t seed)> make;
};

/// Every differentiable op exactly once, then layer composites, then both
/// full models at tiny dims.
const std::vector<GradCase>& gradcheck_registry();

/// Tiny configuration used for the full-model checks.
FusionConfig tiny_config(Architecture arch);

struct GradcheckLine {
  std::string name;
  CaseGroup group;
  double worst_error = 0.0;
  bool passed = false;
};

struct GradcheckReport {
  std::vector<GradcheckLine> lines;
  bool all_passed() const;
  double worst() const;
};

/// Runs each case for seeds base_seed .. base_seed + seeds - 1.
GradcheckReport run_gradcheck(std::uint64_t base_seed = 0, std::size_t seeds = 1,
                              double tolerance = kGradcheckTolerance);

std::string_view to_string(CaseGroup group);

}  // namespace omniban
