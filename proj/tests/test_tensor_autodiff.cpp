#include <doctest.h>

#include <cmath>
#include <limits>

#include "helpers.hpp"
#include "omniban/errors.hpp"
#include "omniban/flop_meter.hpp"
#include "omniban/gradcheck.hpp"
#include "omniban/ops.hpp"
#include "omniban/rng.hpp"

using namespace omniban;

namespace {

// Gradient problem over owned input tensors; fn must produce a scalar.
GradProblem problem(std::vector<Tensor> inputs, std::function<Var(std::vector<Var>&)> fn) {
  auto store = std::make_shared<std::vector<Tensor>>(std::move(inputs));
  GradProblem p;
  for (auto& t : *store) p.checked.push_back(&t);
  auto* raw = store.get();
  p.build = [raw, fn](Tape& tape) {
    std::vector<Var> vars;
    for (const auto& t : *raw) vars.push_back(tape.parameter(t));
    return fn(vars);
  };
  p.storage = store;
  return p;
}

}  // namespace

TEST_CASE("tensor construction and invariants") {
  const Tensor t({2, 3}, {1, 2, 3, 4, 5, 6});
  CHECK(t.size() == 6);
  CHECK(t.at(1, 2) == 6);
  CHECK_THROWS_AS(Tensor({2, 3}, {1, 2}), DimensionError);
  CHECK_THROWS_AS(Tensor({0, 3}, {}), DimensionError);
  const Tensor r = t.reshaped({3, 2});
  CHECK(r.same_storage(t));
  CHECK(Tensor().rank() == 0);
}

TEST_CASE("matmul examples") {
  Tape tape;
  const Var i2 = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  const Var m = tape.constant(Tensor::matrix({{1, 2}, {3, 4}}));
  CHECK(bit_equal(matmul(i2, m).value(), m.value()));
  const Var a = tape.constant(Tensor::matrix({{1, 2}}));
  const Var b = tape.constant(Tensor::matrix({{3}, {4}}));
  CHECK(matmul(a, b).value().item() == 11.0);
}

TEST_CASE("matmul shape mismatch names both shapes") {
  Tape tape;
  const Var a = tape.constant(Tensor::zeros({2, 3}));
  const Var b = tape.constant(Tensor::zeros({2, 3}));
  try {
    matmul(a, b);
    FAIL("expected DimensionError");
  } catch (const DimensionError& e) {
    const std::string msg = e.what();
    CHECK(msg.find("[2x3]") != std::string::npos);
  }
}

TEST_CASE("matmul gradient of sum matches finite differences to 1e-6") {
  Rng rng(11);
  auto p = problem({rng.normal_tensor({3, 4}, 1.0), rng.normal_tensor({4, 5}, 1.0)},
                   [](std::vector<Var>& v) { return sum(matmul(v[0], v[1])); });
  CHECK(check_gradients(p).relative_error < 1e-6);
}

TEST_CASE("softmax examples") {
  Tape tape;
  const Var x = tape.constant(Tensor::matrix({{0, 0}}));
  const Tensor s = softmax(x, 1).value();
  CHECK(s[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(s[1] == doctest::Approx(0.5).epsilon(1e-15));

  const Var m = mask_fill(tape.constant(Tensor::matrix({{7, 0}})), {false, true});
  const Tensor sm = softmax(m, 1).value();
  CHECK(sm[0] == 0.0);
  CHECK(sm[1] == 1.0);

  const Tensor s3 = softmax(tape.constant(Tensor::matrix({{1, 2, 3}})), 1).value();
  const auto ref = oracle::softmax({1, 2, 3});
  for (std::size_t i = 0; i < 3; ++i) CHECK(std::abs(s3[i] - ref[i]) < 1e-12);
}

TEST_CASE("softmax of a fully masked slice raises") {
  Tape tape;
  const Var m = mask_fill(tape.constant(Tensor::matrix({{1, 2}, {3, 4}})), {true, true, false, false});
  try {
    softmax(m, 1);
    FAIL("expected MaskError");
  } catch (const MaskError& e) {
    CHECK(std::string(e.what()) == "fully masked softmax slice");
  }
}

TEST_CASE("softmax sums to one and is shift invariant") {
  Rng rng(3);
  for (int trial = 0; trial < 20; ++trial) {
    Tape tape;
    const Tensor x = rng.normal_tensor({4, 6}, 5.0);
    for (std::size_t axis : {0u, 1u}) {
      const Tensor s = softmax(tape.constant(x), axis).value();
      const std::size_t outer = axis == 1 ? 4 : 6, len = axis == 1 ? 6 : 4;
      for (std::size_t o = 0; o < outer; ++o) {
        double total = 0.0;
        for (std::size_t i = 0; i < len; ++i) {
          const double v = axis == 1 ? s.at(o, i) : s.at(i, o);
          CHECK(v >= 0.0);
          CHECK(v <= 1.0);
          total += v;
        }
        CHECK(std::abs(total - 1.0) < 1e-9);
      }
    }
    // Adding a constant per row leaves a row softmax unchanged.
    std::vector<double> shifted = x.to_vector();
    for (std::size_t r = 0; r < 4; ++r)
      for (std::size_t c = 0; c < 6; ++c) shifted[r * 6 + c] += 100.0 * static_cast<double>(r) - 37.0;
    const Tensor a = softmax(tape.constant(x), 1).value();
    const Tensor b = softmax(tape.constant(Tensor({4, 6}, shifted)), 1).value();
    CHECK(max_abs_diff(a, b) < 1e-9);
  }
}

TEST_CASE("elementwise examples and broadcasting") {
  Tape tape;
  const Var a = tape.constant(Tensor::matrix({{1, 2}}));
  CHECK(bit_equal(mul(a, tape.constant(Tensor::matrix({{0, 0}}))).value(), Tensor::matrix({{0, 0}})));
  CHECK(bit_equal(add(a, tape.constant(Tensor::matrix({{3, 4}}))).value(), Tensor::matrix({{4, 6}})));
  CHECK(broadcast_shape({2, 3}, {3}) == Shape{2, 3});
  CHECK(broadcast_shape({2, 1}, {1, 3}) == Shape{2, 3});
  CHECK_THROWS_AS(broadcast_shape({2, 3}, {2}), DimensionError);
  CHECK_THROWS_AS(add(tape.constant(Tensor::zeros({2, 3})), tape.constant(Tensor::zeros({3, 2}))),
                  DimensionError);
}

TEST_CASE("broadcast operand gradient is the column sum of the cotangent") {
  Rng rng(5);
  Tape tape;
  const Var a = tape.leaf(rng.normal_tensor({2, 3}, 1.0));
  const Var b = tape.leaf(rng.normal_tensor({1, 3}, 1.0));
  const Tensor w = rng.normal_tensor({2, 3}, 1.0);
  // d/db sum(w * (a * b)) = column sums of w * a.
  tape.backward(sum(mul(tape.constant(w), mul(a, b))));
  const Tensor gb = tape.grad(b);
  for (std::size_t c = 0; c < 3; ++c) {
    const double expect = w.at(0, c) * a.value().at(0, c) + w.at(1, c) * a.value().at(1, c);
    CHECK(std::abs(gb[c] - expect) < 1e-12);
  }
  auto p = problem({a.value(), b.value()}, [w](std::vector<Var>& v) {
    return sum(mul(v[0].tape().constant(w), mul(v[0], v[1])));
  });
  CHECK(check_gradients(p).relative_error < 1e-6);
}

TEST_CASE("linear examples") {
  Tape tape;
  const Var x = tape.constant(Tensor::matrix({{1, 1}}));
  const Var w = tape.constant(Tensor::matrix({{1, 0}, {0, 1}}));
  CHECK(bit_equal(linear(x, w, tape.constant(Tensor::vector({5, 5}))).value(),
                  Tensor::matrix({{6, 6}})));
  Rng rng(2);
  const Tensor r = rng.normal_tensor({3, 2}, 1.0);
  CHECK(bit_equal(linear(tape.constant(r), w, tape.constant(Tensor::vector({0, 0}))).value(), r));
}

TEST_CASE("linear gradcheck on 4x8 to 1e-6") {
  Rng rng(4);
  const Tensor wts = rng.normal_tensor({4, 3}, 1.0);
  auto p = problem({rng.normal_tensor({4, 8}, 1.0), rng.normal_tensor({8, 3}, 1.0),
                    rng.normal_tensor({3}, 1.0)},
                   [wts](std::vector<Var>& v) {
                     return sum(mul(linear(v[0], v[1], v[2]), v[0].tape().constant(wts)));
                   });
  CHECK(check_gradients(p).relative_error < 1e-6);
}

TEST_CASE("backward: sum gives ones, sum of squares gives 2x") {
  Rng rng(9);
  const Tensor x = rng.normal_tensor({2, 3, 2}, 1.0);
  {
    Tape tape;
    const Var v = tape.leaf(x);
    tape.backward(sum(v));
    CHECK(bit_equal(tape.grad(v), Tensor::full(x.shape(), 1.0)));
  }
  {
    Tape tape;
    const Var v = tape.leaf(x);
    tape.backward(sum(mul(v, v)));
    const Tensor g = tape.grad(v);
    for (std::size_t i = 0; i < x.size(); ++i) CHECK(g[i] == 2.0 * x[i]);
  }
}

TEST_CASE("backward accumulates across calls and zero_grad resets") {
  Tape tape;
  const Var v = tape.leaf(Tensor::matrix({{1, 2}}));
  const Var loss = sum(scale(v, 3.0));
  tape.backward(loss);
  tape.backward(loss);
  CHECK(bit_equal(tape.grad(v), Tensor::matrix({{6, 6}})));
  tape.zero_grad();
  tape.backward(loss);
  CHECK(bit_equal(tape.grad(v), Tensor::matrix({{3, 3}})));
}

TEST_CASE("backward errors") {
  Tape tape;
  const Var v = tape.leaf(Tensor::matrix({{1, 2}}));
  CHECK_THROWS_AS(tape.backward(v), TapeError);  // not a scalar
  const Var c = sum(tape.constant(Tensor::matrix({{1, 2}})));
  CHECK_THROWS_AS(tape.backward(c), TapeError);  // detached
  Tape other;
  CHECK_THROWS_AS(other.backward(sum(v)), TapeError);
  CHECK_THROWS_AS(add(v, other.leaf(Tensor::matrix({{1, 2}}))), TapeError);
  Tape inference(Tape::Mode::kInference);
  const Var w = inference.leaf(Tensor::matrix({{1}}));
  CHECK_THROWS_AS(inference.backward(sum(w)), TapeError);
}

TEST_CASE("tape records are topological") {
  Tape tape;
  const Var a = tape.leaf(Tensor::matrix({{1, 2}}));
  const Var b = relu(add(a, a));
  sum(mul(b, a));
  for (const auto& rec : tape.records()) {
    for (auto in : rec.inputs) CHECK(in < rec.output);
    if (rec.kind == OpKind::kLeaf) CHECK(rec.inputs.empty());
  }
}

TEST_CASE("bce_with_logits") {
  Tape tape;
  CHECK(bce_with_logits(tape.constant(Tensor::matrix({{0}})), Tensor::matrix({{0.5}})).value().item() ==
        doctest::Approx(std::log(2.0)).epsilon(1e-14));
  const double big = bce_with_logits(tape.constant(Tensor::matrix({{40}})), Tensor::matrix({{1}})).value().item();
  CHECK(std::isfinite(big));
  CHECK(big < 1e-15);
  Rng rng(8);
  const Tensor x = rng.normal_tensor({1, 4}, 3.0);
  const Tensor t = rng.uniform_tensor({1, 4}, 0.0, 1.0);
  const double got = bce_with_logits(tape.constant(x), t).value().item();
  CHECK(std::abs(got - oracle::bce(x.to_vector(), t.to_vector())) < 1e-12);
  CHECK_THROWS_AS(bce_with_logits(tape.constant(x), Tensor::matrix({{0, 1, 2, 0}})), std::domain_error);
}

TEST_CASE("forward values stay finite for bounded inputs") {
  Rng rng(21);
  Tape tape;
  const Var x = tape.constant(rng.uniform_tensor({5, 7}, -1e3, 1e3));
  for (const Tensor& t : {softmax(x, 1).value(), l2_normalize_rows(x).value(),
                          bce_with_logits(reshape(x, {1, 35}), Tensor::zeros({1, 35})).value()}) {
    for (double v : t.data()) CHECK(std::isfinite(v));
  }
}

TEST_CASE("l2_normalize_rows leaves zero rows at zero") {
  Tape tape;
  const Tensor y = l2_normalize_rows(tape.constant(Tensor::matrix({{3, 4}, {0, 0}}))).value();
  CHECK(y.at(0, 0) == doctest::Approx(0.6));
  CHECK(y.at(0, 1) == doctest::Approx(0.8));
  CHECK(y.at(1, 0) == 0.0);
  CHECK(y.at(1, 1) == 0.0);
}

TEST_CASE("flop meter counts matmul as 2mnk and follows the convention") {
  Rng rng(1);
  FlopMeter meter;
  {
    FlopMeter::Scope scope(meter);
    Tape tape(Tape::Mode::kInference);
    matmul(tape.constant(rng.normal_tensor({3, 4}, 1.0)), tape.constant(rng.normal_tensor({4, 5}, 1.0)));
  }
  CHECK(meter.total_flops() == 2u * 3 * 4 * 5);
  meter.reset();
  {
    FlopMeter::Scope scope(meter);
    Tape tape;
    const Var x = tape.leaf(rng.normal_tensor({2, 3}, 1.0));
    const Var y = softmax(x, 1);
    const FlopCount before = meter.count();
    CHECK(before.transcendentals == 12);  // exp + divide per entry
    CHECK(before.pointwise == 18);        // max, subtract, sum per entry
    tape.backward(sum(y));
    // sum adds 6 pointwise; backward adds nothing.
    CHECK(meter.count().pointwise == before.pointwise + 6);
  }
  // No meter installed: counting is a no-op.
  Tape tape;
  matmul(tape.constant(Tensor::zeros({2, 2})), tape.constant(Tensor::zeros({2, 2})));
  CHECK(meter.count().madds == 0);
}

TEST_CASE("flop meter determinism and disabled meters") {
  Rng rng(6);
  const Tensor a = rng.normal_tensor({4, 4}, 1.0);
  auto run = [&a](FlopMeter& m) {
    FlopMeter::Scope scope(m);
    Tape tape;
    sum(softmax(matmul(tape.constant(a), tape.constant(a)), 1));
    return m.count();
  };
  FlopMeter m1, m2;
  CHECK(run(m1) == run(m2));
  FlopMeter off(false);
  CHECK(run(off).total_flops() == 0);
}

TEST_CASE("tape replay is bit-identical for the same seed") {
  auto forward = [](std::uint64_t seed) {
    Rng rng(seed);
    Tape tape;
    const Var x = tape.constant(rng.normal_tensor({3, 5}, 1.0));
    const Var w = tape.constant(rng.normal_tensor({5, 4}, 1.0));
    return softmax(relu(matmul(x, w)), 1).value();
  };
  CHECK(bit_equal(forward(17), forward(17)));
  CHECK_FALSE(bit_equal(forward(17), forward(18)));
}
