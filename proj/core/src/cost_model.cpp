#include "omniban/cost_model.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <ostream>
#include <sstream>

#include "omniban/errors.hpp"

namespace omniban {

double AnalyticCost::total() const {
  double t = 0.0;
  for (const auto& term : terms) {
    if (term.in_total) t += term.value;
  }
  return t;
}

double AnalyticCost::term(std::string_view name) const {
  for (const auto& t : terms) {
    if (t.name == name) return t.value;
  }
  return 0.0;
}

AnalyticCost analytic_self_attention_cost(std::size_t n_v, std::size_t n_q, std::size_t d_v,
                                          std::size_t d_q) {
  const double nv = static_cast<double>(n_v), nq = static_cast<double>(n_q);
  const double dv = static_cast<double>(d_v), dq = static_cast<double>(d_q);
  AnalyticCost c;
  c.terms.push_back({"self_attention.quadratic", nv * nv * dv + nq * nq * dq, true});
  c.terms.push_back({"self_attention.projection", nv * dv * dv + nq * dq * dq, false});
  return c;
}

AnalyticCost analytic_coattention_cost(std::size_t n_v, std::size_t n_q, std::size_t d_v,
                                       std::size_t d_q, std::size_t layers) {
  AnalyticCost c = analytic_self_attention_cost(n_v, n_q, d_v, d_q);
  const double nv = static_cast<double>(n_v), nq = static_cast<double>(n_q);
  const double dv = static_cast<double>(d_v), dq = static_cast<double>(d_q);
  const double l = static_cast<double>(layers);
  c.terms.push_back({"cross.interaction", l * nq * nv * dq, true});
  c.terms.push_back({"cross.image_projection", l * nv * dv * dq, true});
  c.terms.push_back({"cross.question_projection", l * nq * dq * dq, true});
  c.terms.push_back({"ffn.question", l * nq * dq * dq, true});
  c.terms.push_back({"ffn.image", l * nv * dv * dv, true});
  return c;
}

AnalyticCost analytic_omniban_cost(std::size_t n_v, std::size_t n_q, std::size_t d_v,
                                   std::size_t d_q, std::size_t d_m, std::size_t glimpses) {
  AnalyticCost c = analytic_self_attention_cost(n_v, n_q, d_v, d_q);
  const double nv = static_cast<double>(n_v), nq = static_cast<double>(n_q);
  const double dq = static_cast<double>(d_q), dm = static_cast<double>(d_m);
  const double g = static_cast<double>(glimpses);
  c.terms.push_back({"bilinear.interaction", g * nq * nv * dm, true});
  c.terms.push_back({"bilinear.post_projection", g * nq * dq * dq, true});
  if (d_m >= std::min(d_v, d_q)) {
    c.warnings.push_back("d_m = " + std::to_string(d_m) + " is not below min(d_v, d_q) = " +
                         std::to_string(std::min(d_v, d_q)) +
                         "; the factorised interaction saves nothing in this regime");
  }
  return c;
}

AnalyticCost analytic_cost(const FusionConfig& config, std::size_t n_v, std::size_t n_q) {
  switch (config.arch) {
    case Architecture::kOmniban:
      return analytic_omniban_cost(n_v, n_q, config.d_v, config.d_q, config.d_m, config.glimpses);
    case Architecture::kCoattention:
      return analytic_coattention_cost(n_v, n_q, config.d_v, config.d_q,
                                       config.coattention_layers);
    case Architecture::kConcatLinear: return {};
  }
  return {};
}

std::size_t count_parameters(std::span<const Tensor> tensors) {
  std::size_t n = 0;
  for (const auto& t : tensors) n += t.size();
  return n;
}

std::size_t count_parameters(const LinearParams& layer) {
  return layer.weight.size() + (layer.bias ? layer.bias->size() : 0);
}

std::size_t count_parameters(const Model& model, bool fusion_only) {
  std::size_t n = 0;
  model.visit_parameters([&](const std::string& name, const Tensor& t) {
    if (fusion_only && Model::is_shared_head(name)) return;
    n += numel(t.shape());
  });
  return n;
}

FlopMeasurement measure_flops(const Model& model, const Example& example, FlopMeter& meter) {
  if (!meter.enabled()) throw std::logic_error("measure_flops needs an enabled FlopMeter");
  meter.reset();
  Tape tape(Tape::Mode::kInference);
  {
    FlopMeter::Scope scope(meter);
    model.forward(tape, example);
  }
  FlopMeasurement m;
  m.count = meter.count();
  m.records.assign(tape.records().begin(), tape.records().end());
  return m;
}

FlopCount measure_flops(const Model& model, const Example& example) {
  FlopMeter meter;
  return measure_flops(model, example, meter).count;
}

Example reference_example(const FusionConfig& config, std::size_t n_v, std::size_t n_q,
                          std::uint64_t seed) {
  Rng rng = Rng(seed).split("reference_example");
  Example ex;
  ex.image = image_features(rng.normal_tensor({n_v, config.image_width()}, 1.0));
  ex.question = {rng.normal_tensor({n_q, config.d_q}, 1.0), std::vector<bool>(n_q, true),
                 Modality::kQuestion};
  return ex;
}

CostReport build_cost_report(const FusionConfig& config, std::size_t n_v, std::size_t n_q,
                             std::uint64_t seed) {
  Rng rng = Rng(seed).split("cost_model");
  const Model model(config, rng);
  CostReport r;
  r.config = config;
  r.n_v = n_v;
  r.n_q = n_q;
  r.analytic = analytic_cost(config, n_v, n_q);
  r.parameters = count_parameters(model);
  r.fusion_parameters = count_parameters(model, true);
  r.flops = measure_flops(model, reference_example(config, n_v, n_q, seed));
  r.convention = std::string(FlopMeter::kConvention);
  return r;
}

const ComparisonRow& Comparison::row(std::string_view quantity) const {
  for (const auto& r : rows) {
    if (r.quantity == quantity) return r;
  }
  throw std::out_of_range("no comparison row '" + std::string(quantity) + "'");
}

Comparison compare(const CostReport& a, const CostReport& b) {
  if (a.n_v != b.n_v || a.n_q != b.n_q) {
    throw DimensionError("cost reports use different input sizes (N_v, N_q): (" +
                         std::to_string(a.n_v) + ", " + std::to_string(a.n_q) + ") vs (" +
                         std::to_string(b.n_v) + ", " + std::to_string(b.n_q) + ")");
  }
  Comparison cmp;
  cmp.label_a = std::string(to_string(a.config.arch));
  cmp.label_b = std::string(to_string(b.config.arch));
  cmp.n_v = a.n_v;
  cmp.n_q = a.n_q;
  cmp.convention = a.convention;
  auto push = [&cmp](std::string name, double va, double vb) {
    const double ratio = (va == 0.0 && vb == 0.0) ? 1.0 : va / vb;
    cmp.rows.push_back({std::move(name), va, vb, ratio});
  };
  push("parameters", static_cast<double>(a.parameters), static_cast<double>(b.parameters));
  push("fusion_parameters", static_cast<double>(a.fusion_parameters),
       static_cast<double>(b.fusion_parameters));
  push("flops", static_cast<double>(a.flops.total_flops()),
       static_cast<double>(b.flops.total_flops()));
  push("madds", static_cast<double>(a.flops.madds), static_cast<double>(b.flops.madds));
  push("analytic_total", a.analytic.total(), b.analytic.total());
  std::vector<std::string> names;
  for (const auto* rep : {&a, &b}) {
    for (const auto& t : rep->analytic.terms) {
      if (std::find(names.begin(), names.end(), t.name) == names.end()) names.push_back(t.name);
    }
  }
  for (const auto& n : names) push("analytic." + n, a.analytic.term(n), b.analytic.term(n));
  return cmp;
}

void write_csv(std::ostream& os, const Comparison& cmp) {
  os << "quantity," << cmp.label_a << ',' << cmp.label_b << ",ratio\n";
  os << std::setprecision(17);
  for (const auto& r : cmp.rows) os << r.quantity << ',' << r.a << ',' << r.b << ',' << r.ratio << '\n';
}

void write_table(std::ostream& os, const Comparison& cmp) {
  os << "N_v=" << cmp.n_v << " N_q=" << cmp.n_q << "\n";
  os << "FLOP convention: " << cmp.convention << "\n";
  os << std::left << std::setw(40) << "quantity" << std::right << std::setw(18) << cmp.label_a
     << std::setw(18) << cmp.label_b << std::setw(10) << "ratio" << "\n";
  os << std::string(86, '-') << "\n";
  for (const auto& r : cmp.rows) {
    os << std::left << std::setw(40) << r.quantity << std::right << std::fixed
       << std::setprecision(0) << std::setw(18) << r.a << std::setw(18) << r.b
       << std::setprecision(4) << std::setw(10) << r.ratio << "\n";
  }
  os.unsetf(std::ios::fixed);
}

FusionConfig reference_config(Architecture arch) {
  FusionConfig c;
  c.arch = arch;
  return c;
}

double loglog_slope(std::span<const double> x, std::span<const double> y) {
  if (x.size() != y.size() || x.size() < 2) throw DimensionError("loglog_slope needs >= 2 paired points");
  double mx = 0.0, my = 0.0;
  const double n = static_cast<double>(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += std::log(x[i]);
    my += std::log(y[i]);
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    const double dx = std::log(x[i]) - mx;
    sxy += dx * (std::log(y[i]) - my);
    sxx += dx * dx;
  }
  return sxy / sxx;
}

std::vector<ScalingPoint> scaling_sweep(const FusionConfig& config, std::size_t n_v,
                                        std::span<const std::size_t> n_q_values) {
  Rng rng = Rng(0).split("cost_model");
  const Model model(config, rng);
  std::vector<ScalingPoint> out;
  for (auto n_q : n_q_values) {
    ScalingPoint p;
    p.n_q = n_q;
    p.analytic = analytic_cost(config, n_v, n_q).total();
    p.empirical_flops =
        static_cast<double>(measure_flops(model, reference_example(config, n_v, n_q)).total_flops());
    out.push_back(p);
  }
  return out;
}

}  // namespace omniban
