#include "omniban/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "omniban/ops.hpp"

namespace omniban {
namespace {

using VarFn = std::function<Var(Tape&, const std::vector<Var>&)>;

// Non-scalar outputs are contracted with fixed random weights so that every
// output entry contributes to the checked scalar.
Var probe(Var out, const Tensor& weights) {
  if (out.value().rank() == 0) return out;
  return sum(mul(out, out.tape().constant(weights)));
}

struct OpStorage {
  std::vector<Tensor> inputs;
  std::optional<Tensor> weights;
};

GradProblem op_problem(std::vector<Tensor> inputs, VarFn fn, Rng& rng) {
  auto store = std::make_shared<OpStorage>();
  store->inputs = std::move(inputs);
  GradProblem p;
  for (auto& t : store->inputs) p.checked.push_back(&t);
  OpStorage* s = store.get();
  Rng probe_rng = rng.split("probe");
  p.build = [s, fn, probe_rng](Tape& tape) mutable {
    std::vector<Var> vars;
    for (const auto& t : s->inputs) vars.push_back(tape.parameter(t));
    Var out = fn(tape, vars);
    if (out.value().rank() == 0) return out;
    if (!s->weights) s->weights = probe_rng.normal_tensor(out.shape(), 1.0);
    return probe(out, *s->weights);
  };
  p.storage = store;
  return p;
}

// Entries of a random tensor pushed away from 0, for kinked ops.
Tensor away_from_zero(Rng& rng, Shape shape) {
  Tensor t = rng.normal_tensor(shape, 1.0);
  std::vector<double> v = t.to_vector();
  for (auto& x : v) {
    if (std::abs(x) < 0.05) x = x < 0 ? x - 0.1 : x + 0.1;
  }
  return Tensor(std::move(shape), std::move(v));
}

std::vector<bool> trailing_pad(std::size_t n, std::size_t pad) {
  std::vector<bool> m(n, true);
  for (std::size_t i = n - pad; i < n; ++i) m[i] = false;
  return m;
}

std::vector<GradCase> op_cases() {
  std::vector<GradCase> cases;
  auto add_case = [&cases](OpKind kind, std::function<GradProblem(Rng&)> make) {
    cases.push_back({std::string(op_name(kind)), CaseGroup::kOp, [make](std::uint64_t seed) {
                       Rng rng = Rng(seed).split("gradcheck.op");
                       return make(rng);
                     }});
  };
  add_case(OpKind::kMatMul, [](Rng& r) {
    return op_problem({r.normal_tensor({3, 4}, 1.0), r.normal_tensor({4, 5}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return matmul(v[0], v[1]); }, r);
  });
  add_case(OpKind::kLinear, [](Rng& r) {
    return op_problem(
        {r.normal_tensor({3, 4}, 1.0), r.normal_tensor({4, 5}, 1.0), r.normal_tensor({5}, 1.0)},
        [](Tape&, const std::vector<Var>& v) { return add(linear(v[0], v[1], v[2]), linear(v[0], v[1])); },
        r);
  });
  add_case(OpKind::kAdd, [](Rng& r) {
    return op_problem({r.normal_tensor({3, 4}, 1.0), r.normal_tensor({4}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return add(v[0], v[1]); }, r);
  });
  add_case(OpKind::kSub, [](Rng& r) {
    return op_problem({r.normal_tensor({3, 4}, 1.0), r.normal_tensor({3, 1}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return sub(v[0], v[1]); }, r);
  });
  add_case(OpKind::kMul, [](Rng& r) {
    return op_problem({r.normal_tensor({3, 4}, 1.0), r.normal_tensor({3, 4}, 1.0),
                       r.normal_tensor({1, 4}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return mul(mul(v[0], v[1]), v[2]); },
                      r);
  });
  add_case(OpKind::kDiv, [](Rng& r) {
    return op_problem({r.normal_tensor({3, 4}, 1.0), away_from_zero(r, {3, 4}),
                       r.uniform_tensor({4}, 0.5, 2.0)},
                      [](Tape&, const std::vector<Var>& v) { return div(div(v[0], v[1]), v[2]); },
                      r);
  });
  add_case(OpKind::kScale, [](Rng& r) {
    return op_problem({r.normal_tensor({3, 4}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return scale(v[0], -1.7); }, r);
  });
  add_case(OpKind::kTranspose, [](Rng& r) {
    return op_problem({r.normal_tensor({3, 4}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return transpose(v[0]); }, r);
  });
  add_case(OpKind::kReshape, [](Rng& r) {
    return op_problem({r.normal_tensor({3, 4}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return reshape(v[0], {2, 6}); }, r);
  });
  add_case(OpKind::kSliceCols, [](Rng& r) {
    return op_problem({r.normal_tensor({3, 6}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return slice_cols(v[0], 2, 3); }, r);
  });
  add_case(OpKind::kConcatCols, [](Rng& r) {
    return op_problem({r.normal_tensor({3, 2}, 1.0), r.normal_tensor({3, 4}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return concat_cols(v); }, r);
  });
  add_case(OpKind::kConcatRows, [](Rng& r) {
    return op_problem({r.normal_tensor({2, 3}, 1.0), r.normal_tensor({4, 3}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return concat_rows(v); }, r);
  });
  add_case(OpKind::kMaskFill, [](Rng& r) {
    // -inf entries are only meaningful downstream of a softmax.
    const std::vector<bool> keep = {true, false, true, true, false, true, true, true,
                                    true, true, false, false};
    return op_problem({r.normal_tensor({3, 4}, 1.0)},
                      [keep](Tape&, const std::vector<Var>& v) {
                        return softmax(mask_fill(v[0], keep), 1);
                      },
                      r);
  });
  add_case(OpKind::kSoftmax, [](Rng& r) {
    return op_problem({r.normal_tensor({3, 4}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) {
                        return add(softmax(v[0], 0), softmax(v[0], 1));
                      },
                      r);
  });
  add_case(OpKind::kRelu, [](Rng& r) {
    return op_problem({away_from_zero(r, {4, 5})},
                      [](Tape&, const std::vector<Var>& v) { return relu(v[0]); }, r);
  });
  add_case(OpKind::kSum, [](Rng& r) {
    return op_problem({r.normal_tensor({4, 5}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return scale(sum(v[0]), 0.3); }, r);
  });
  add_case(OpKind::kSumRows, [](Rng& r) {
    return op_problem({r.normal_tensor({4, 5}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return sum_rows(v[0]); }, r);
  });
  add_case(OpKind::kSquare, [](Rng& r) {
    return op_problem({r.normal_tensor({4, 5}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return square(v[0]); }, r);
  });
  add_case(OpKind::kRowL2Normalize, [](Rng& r) {
    return op_problem({r.normal_tensor({4, 8}, 1.0)},
                      [](Tape&, const std::vector<Var>& v) { return l2_normalize_rows(v[0]); }, r);
  });
  add_case(OpKind::kBceWithLogits, [](Rng& r) {
    Tensor target = r.uniform_tensor({1, 4}, 0.0, 1.0);
    return op_problem({r.normal_tensor({1, 4}, 2.0)},
                      [target](Tape&, const std::vector<Var>& v) {
                        return bce_with_logits(v[0], target);
                      },
                      r);
  });
  return cases;
}

struct AttentionStorage {
  MultiHeadAttentionParams params;
  Tensor queries;
  Tensor context;
};

struct BilinearStorage {
  BilinearParams params;
  std::optional<LinearParams> projection;
  Tensor image;
  Tensor question;
  Tensor extra;
};

template <typename Params>
void collect(Params& params, std::vector<Tensor*>& out) {
  params.visit("", [&out](const std::string&, Tensor& t) { out.push_back(&t); });
}

std::vector<GradCase> composite_cases() {
  std::vector<GradCase> cases;
  cases.push_back({"multi_head_attention", CaseGroup::kComposite, [](std::uint64_t seed) {
                     Rng rng = Rng(seed).split("gradcheck.mha");
                     auto s = std::make_shared<AttentionStorage>(AttentionStorage{
                         make_attention(6, 5, 2, rng), rng.normal_tensor({3, 6}, 1.0),
                         rng.normal_tensor({4, 5}, 1.0)});
                     Tensor w = rng.normal_tensor({3, 6}, 1.0);
                     GradProblem p;
                     collect(s->params, p.checked);
                     p.checked.push_back(&s->queries);
                     p.checked.push_back(&s->context);
                     AttentionStorage* raw = s.get();
                     p.build = [raw, w](Tape& tape) {
                       Var out = multi_head_attention(raw->params, tape.parameter(raw->queries),
                                                      trailing_pad(3, 1),
                                                      tape.parameter(raw->context),
                                                      trailing_pad(4, 1));
                       return probe(out, w);
                     };
                     p.storage = s;
                     return p;
                   }});
  cases.push_back({"self_attend", CaseGroup::kComposite, [](std::uint64_t seed) {
                     Rng rng = Rng(seed).split("gradcheck.self_attend");
                     auto s = std::make_shared<AttentionStorage>(AttentionStorage{
                         make_attention(8, 8, 2, rng), rng.normal_tensor({5, 8}, 1.0), Tensor()});
                     Tensor w = rng.normal_tensor({5, 8}, 1.0);
                     GradProblem p;
                     collect(s->params, p.checked);
                     p.checked.push_back(&s->queries);
                     AttentionStorage* raw = s.get();
                     p.build = [raw, w](Tape& tape) {
                       return probe(self_attend(raw->params, tape.parameter(raw->queries),
                                                trailing_pad(5, 2)),
                                    w);
                     };
                     p.storage = s;
                     return p;
                   }});

  // Bilinear composites share one fixture: N_v = 2, N_q = 4 with one padded
  // question row, d_v = d_q = 6, d_m = 4, two glimpses.
  auto bilinear_case = [&cases](std::string name, bool with_projection,
                                std::function<Var(const BilinearStorage&, Tape&, Var, Var)> body) {
    cases.push_back({std::move(name), CaseGroup::kComposite,
                     [with_projection, body](std::uint64_t seed) {
                       Rng rng = Rng(seed).split("gradcheck.bilinear");
                       auto s = std::make_shared<BilinearStorage>(BilinearStorage{
                           make_bilinear(6, 6, 4, 2, 6, rng), std::nullopt,
                           rng.normal_tensor({2, with_projection ? 5u : 6u}, 1.0),
                           rng.normal_tensor({4, 6}, 1.0), rng.normal_tensor({2, 4}, 1.0)});
                       if (with_projection) s->projection = make_linear(5, 6, rng);
                       Rng probe_rng = rng.split("probe");
                       GradProblem p;
                       collect(s->params, p.checked);
                       if (s->projection) s->projection->visit("", [&p](const std::string&, Tensor& t) {
                         p.checked.push_back(&t);
                       });
                       p.checked.push_back(&s->image);
                       p.checked.push_back(&s->question);
                       p.checked.push_back(&s->extra);
                       BilinearStorage* raw = s.get();
                       auto weights = std::make_shared<std::optional<Tensor>>();
                       p.build = [raw, body, weights, probe_rng](Tape& tape) mutable {
                         Var v = tape.parameter(raw->image);
                         if (raw->projection) v = project_image(*raw->projection, v);
                         Var out = body(*raw, tape, v, tape.parameter(raw->question));
                         if (out.value().rank() == 0) return out;
                         if (!*weights) *weights = probe_rng.normal_tensor(out.shape(), 1.0);
                         return probe(out, **weights);
                       };
                       p.storage = s;
                       return p;
                     }});
  };
  const std::vector<bool> q_mask = trailing_pad(4, 1);
  bilinear_case("bilinear_attention_map", false,
                [q_mask](const BilinearStorage& s, Tape&, Var v, Var q) {
                  return add(bilinear_attention_map(s.params, v, q, q_mask, 0),
                             bilinear_attention_map(s.params, v, q, q_mask, 1));
                });
  bilinear_case("glimpse_features", false,
                [](const BilinearStorage& s, Tape& tape, Var v, Var q) {
                  // Attention taken as a free input so its gradient is checked too.
                  Var att = softmax(reshape(tape.parameter(s.extra), {1, 8}), 1);
                  return glimpse_features(s.params, v, q, reshape(att, {2, 4}), 1);
                });
  bilinear_case("fuse", false, [q_mask](const BilinearStorage& s, Tape&, Var v, Var q) {
    GlimpseBundle b = fuse(s.params, v, {true, true}, q, q_mask);
    return concat_cols(std::vector<Var>{reshape(b.distributions, {1, 16}),
                                        reshape(b.fused, {1, 8}), b.joint});
  });
  bilinear_case("project_image+fuse", true, [q_mask](const BilinearStorage& s, Tape&, Var v, Var q) {
    return fuse(s.params, v, {true, true}, q, q_mask).joint;
  });
  bilinear_case("orthogonality_loss", false, [](const BilinearStorage& s, Tape& tape, Var, Var) {
    // Gradient with respect to pre-softmax scores, three glimpses over 8 pairs.
    Var scores = add(reshape(tape.parameter(s.question), {3, 8}),
                     reshape(tape.parameter(s.extra), {1, 8}));
    return orthogonality_loss(softmax(scores, 1));
  });
  return cases;
}

struct ModelStorage {
  Model model;
  Example example;
};

GradCase model_case(Architecture arch) {
  return {"model." + std::string(to_string(arch)), CaseGroup::kModel, [arch](std::uint64_t seed) {
            Rng rng = Rng(seed).split("gradcheck.model");
            const FusionConfig cfg = tiny_config(arch);
            Example ex;
            ex.image = image_features(rng.normal_tensor({2, cfg.image_width()}, 1.0));
            std::vector<double> q = rng.normal_tensor({4, cfg.d_q}, 1.0).to_vector();
            std::fill(q.end() - static_cast<std::ptrdiff_t>(cfg.d_q), q.end(), 0.0);
            ex.question = {Tensor({4, cfg.d_q}, std::move(q)), trailing_pad(4, 1),
                           Modality::kQuestion};
            ex.answer = static_cast<std::size_t>(rng.below(cfg.answers));
            auto s = std::make_shared<ModelStorage>(ModelStorage{Model(cfg, rng), ex});
            GradProblem p;
            s->model.visit_parameters([&p](const std::string&, Tensor& t) { p.checked.push_back(&t); });
            ModelStorage* raw = s.get();
            p.build = [raw](Tape& tape) {
              ForwardOutput out = raw->model.forward(tape, raw->example);
              Var loss = bce_with_logits(out.logits,
                                         one_hot(raw->example.answer, raw->model.config().answers));
              if (out.bundle) loss = add(loss, scale(orthogonality_loss(out.bundle->distributions), 0.5));
              return loss;
            };
            p.storage = s;
            return p;
          }};
}

double norm(const std::vector<double>& v) {
  double s = 0.0;
  for (double x : v) s += x * x;
  return std::sqrt(s);
}

}  // namespace

GradcheckOutcome check_gradients(GradProblem& problem, double step) {
  std::vector<double> analytic;
  {
    Tape tape(Tape::Mode::kTraining);
    Var loss = problem.build(tape);
    tape.backward(loss);
    for (Tensor* t : problem.checked) {
      auto v = tape.find_parameter(*t);
      if (v) {
        const Tensor g = tape.grad(*v);
        analytic.insert(analytic.end(), g.data().begin(), g.data().end());
      } else {
        analytic.insert(analytic.end(), t->size(), 0.0);
      }
    }
  }
  auto evaluate = [&problem]() {
    Tape tape(Tape::Mode::kInference);
    return problem.build(tape).value().item();
  };
  std::vector<double> numeric;
  numeric.reserve(analytic.size());
  for (Tensor* t : problem.checked) {
    const Tensor original = *t;
    std::vector<double> data = original.to_vector();
    for (std::size_t i = 0; i < data.size(); ++i) {
      const double x = data[i];
      data[i] = x + step;
      *t = Tensor(original.shape(), data);
      const double up = evaluate();
      data[i] = x - step;
      *t = Tensor(original.shape(), data);
      const double down = evaluate();
      data[i] = x;
      numeric.push_back((up - down) / (2.0 * step));
    }
    *t = original;
  }
  std::vector<double> diff(analytic.size());
  for (std::size_t i = 0; i < diff.size(); ++i) diff[i] = analytic[i] - numeric[i];
  const double denom = std::max({norm(analytic), norm(numeric), 1e-12});
  return {norm(diff) / denom, analytic.size()};
}

FusionConfig tiny_config(Architecture arch) {
  FusionConfig c;
  c.arch = arch;
  c.image_input_dim = 5;
  c.d_v = 8;
  c.d_q = 8;
  c.d_m = 4;
  c.heads = 2;
  c.glimpses = 2;
  c.coattention_layers = 1;
  c.ffn_expansion = 2;
  c.answers = 3;
  return c;
}

const std::vector<GradCase>& gradcheck_registry() {
  static const std::vector<GradCase> registry = [] {
    std::vector<GradCase> all = op_cases();
    for (auto& c : composite_cases()) all.push_back(std::move(c));
    all.push_back(model_case(Architecture::kOmniban));
    all.push_back(model_case(Architecture::kCoattention));
    all.push_back(model_case(Architecture::kConcatLinear));
    return all;
  }();
  return registry;
}

bool GradcheckReport::all_passed() const {
  return std::all_of(lines.begin(), lines.end(), [](const auto& l) { return l.passed; });
}

double GradcheckReport::worst() const {
  double w = 0.0;
  for (const auto& l : lines) w = std::max(w, l.worst_error);
  return w;
}

GradcheckReport run_gradcheck(std::uint64_t base_seed, std::size_t seeds, double tolerance) {
  GradcheckReport report;
  for (const auto& c : gradcheck_registry()) {
    GradcheckLine line{c.name, c.group, 0.0, true};
    for (std::size_t s = 0; s < seeds; ++s) {
      GradProblem p = c.make(base_seed + s);
      const double err = check_gradients(p).relative_error;
      // NaN must fail too.
      if (!(err < tolerance)) line.passed = false;
      line.worst_error = std::isnan(err) ? err : std::max(line.worst_error, err);
      if (std::isnan(line.worst_error)) break;
    }
    report.lines.push_back(std::move(line));
  }
  return report;
}

std::string_view to_string(CaseGroup group) {
  switch (group) {
    case CaseGroup::kOp: return "op";
    case CaseGroup::kComposite: return "composite";
    case CaseGroup::kModel: return "model";
  }
  return "?";
}

}  // namespace omniban
