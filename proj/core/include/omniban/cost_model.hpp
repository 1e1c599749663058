#pragma once

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "omniban/flop_meter.hpp"
#include "omniban/model.hpp"

namespace omniban {

/// One named term of an asymptotic cost formula. Terms with in_total=false
/// are itemised for reference but are not part of the formula's value.
struct CostTerm {
  std::string name;
  double value = 0.0;
  bool in_total = true;
};

struct AnalyticCost {
  std::vector<CostTerm> terms;
  std::vector<std::string> warnings;

  double total() const;
  /// Value of a named term, 0 when absent.
  double term(std::string_view name) const;
};

/// N_v^2 d_v + N_q^2 d_q, with the N d^2 projection work itemised apart.
AnalyticCost analytic_self_attention_cost(std::size_t n_v, std::size_t n_q, std::size_t d_v,
                                          std::size_t d_q);
/// Self-attention plus L x (cross-attention + FFN) terms.
AnalyticCost analytic_coattention_cost(std::size_t n_v, std::size_t n_q, std::size_t d_v,
                                       std::size_t d_q, std::size_t layers);
/// Self-attention plus glimpses x (N_q N_v d_m + N_q d_q^2). Warns when d_m
/// is not below min(d_v, d_q).
AnalyticCost analytic_omniban_cost(std::size_t n_v, std::size_t n_q, std::size_t d_v,
                                   std::size_t d_q, std::size_t d_m, std::size_t glimpses);
AnalyticCost analytic_cost(const FusionConfig& config, std::size_t n_v, std::size_t n_q);

std::size_t count_parameters(std::span<const Tensor> tensors);
std::size_t count_parameters(const LinearParams& layer);
/// fusion_only skips the image projection and the classifier head.
std::size_t count_parameters(const Model& model, bool fusion_only = false);

struct FlopMeasurement {
  FlopCount count;
  std::vector<Record> records;
};

/// Counts one batch-1 forward pass with `meter`, which must be enabled.
/// The recorded tape is returned alongside the count.
FlopMeasurement measure_flops(const Model& model, const Example& example, FlopMeter& meter);
FlopCount measure_flops(const Model& model, const Example& example);

/// Random fully-valid example of the model's input widths.
Example reference_example(const FusionConfig& config, std::size_t n_v, std::size_t n_q,
                          std::uint64_t seed = 0);

struct CostReport {
  FusionConfig config;
  std::size_t n_v = 1;
  std::size_t n_q = 20;
  AnalyticCost analytic;
  std::size_t parameters = 0;
  std::size_t fusion_parameters = 0;
  FlopCount flops;
  std::string convention;
};

CostReport build_cost_report(const FusionConfig& config, std::size_t n_v, std::size_t n_q,
                             std::uint64_t seed = 0);

struct ComparisonRow {
  std::string quantity;
  double a = 0.0;
  double b = 0.0;
  double ratio = 1.0;  // a / b
};

struct Comparison {
  std::string label_a;
  std::string label_b;
  std::size_t n_v = 0;
  std::size_t n_q = 0;
  std::string convention;
  std::vector<ComparisonRow> rows;

  const ComparisonRow& row(std::string_view quantity) const;
};

/// Side-by-side numbers; requires equal N_v and N_q.
Comparison compare(const CostReport& a, const CostReport& b);

void write_csv(std::ostream& os, const Comparison& cmp);
void write_table(std::ostream& os, const Comparison& cmp);

/// Values reported for the reference comparison in the original evaluation.
struct PublishedEfficiency {
  static constexpr double kCoattentionParamsM = 31.910;
  static constexpr double kOmnibanParamsM = 21.659;
  static constexpr double kCoattentionFlopsM = 701.276;
  static constexpr double kOmnibanFlopsM = 182.059;
};

/// Reference configuration for comparison against the published numbers.
FusionConfig reference_config(Architecture arch);
inline constexpr std::size_t kReferenceQuestionLength = 20;

/// Least-squares slope of log(y) against log(x).
double loglog_slope(std::span<const double> x, std::span<const double> y);

struct ScalingPoint {
  std::size_t n_q = 0;
  double analytic = 0.0;
  double empirical_flops = 0.0;
};

std::vector<ScalingPoint> scaling_sweep(const FusionConfig& config, std::size_t n_v,
                                        std::span<const std::size_t> n_q_values);

}  // namespace omniban
