#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <numeric>

#include "helpers.hpp"
#include "omniban/bilinear.hpp"
#include "omniban/errors.hpp"
#include "omniban/gradcheck.hpp"

using namespace omniban;
using testutil::to_mat;

namespace {

// Literal double sum: for every shared unit m, build the full
// d_v x d_q bilinear matrix W_v[:,m] W_q[:,m]^T and contract it with every
// (v_j, q_k) pair weighted by A[j,k].
std::vector<double> double_sum(const oracle::Mat& v, const oracle::Mat& q, const oracle::Mat& a,
                               const oracle::Mat& wv, const oracle::Mat& wq) {
  const std::size_t dm = wv[0].size();
  std::vector<double> f(dm, 0.0);
  for (std::size_t m = 0; m < dm; ++m) {
    oracle::Mat w = oracle::zeros(wv.size(), wq.size());
    for (std::size_t r = 0; r < wv.size(); ++r)
      for (std::size_t c = 0; c < wq.size(); ++c) w[r][c] = wv[r][m] * wq[c][m];
    for (std::size_t j = 0; j < v.size(); ++j) {
      for (std::size_t k = 0; k < q.size(); ++k) {
        double s = 0.0;
        for (std::size_t r = 0; r < wv.size(); ++r)
          for (std::size_t c = 0; c < wq.size(); ++c) s += v[j][r] * w[r][c] * q[k][c];
        f[m] += a[j][k] * s;
      }
    }
  }
  return f;
}

Tensor random_distributions(Rng& rng, std::size_t g, std::size_t n) {
  std::vector<double> d(g * n);
  for (std::size_t r = 0; r < g; ++r) {
    double z = 0.0;
    for (std::size_t c = 0; c < n; ++c) z += (d[r * n + c] = rng.uniform(0.0, 1.0));
    for (std::size_t c = 0; c < n; ++c) d[r * n + c] /= z;
  }
  return Tensor({g, n}, std::move(d));
}

}  // namespace

TEST_CASE("single pair map is the unit distribution") {
  Rng rng(1);
  const auto p = make_bilinear(6, 5, 4, 2, 5, rng);
  Tape tape;
  const Var a = bilinear_attention_map(p, tape.constant(rng.normal_tensor({1, 6}, 1.0)),
                                       tape.constant(rng.normal_tensor({1, 5}, 1.0)), {true}, 1);
  CHECK(a.shape() == Shape{1, 1});
  CHECK(a.value().item() == 1.0);
}

TEST_CASE("zero attention projection gives a uniform map over valid pairs") {
  Rng rng(2);
  auto p = make_bilinear(6, 5, 4, 1, 5, rng);
  p.attention_image.weight = Tensor::zeros({6, 4});
  Tape tape;
  const Var a = bilinear_attention_map(p, tape.constant(rng.normal_tensor({2, 6}, 1.0)),
                                       tape.constant(rng.normal_tensor({4, 5}, 1.0)),
                                       {true, true, false, true}, 0);
  for (std::size_t j = 0; j < 2; ++j) {
    for (std::size_t k = 0; k < 4; ++k) {
      if (k == 2) CHECK(a.value().at(j, k) == 0.0);
      else CHECK(a.value().at(j, k) == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
    }
  }
}

TEST_CASE("attention map matches the scalar oracle") {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    Rng rng(seed);
    const auto p = make_bilinear(5, 7, 3, 3, 4, rng);
    const Tensor v = rng.normal_tensor({1, 5}, 1.0), q = rng.normal_tensor({3, 7}, 1.0);
    const auto pv = oracle::matmul(to_mat(v), to_mat(p.attention_image.weight));
    const auto pq = oracle::matmul(to_mat(q), to_mat(p.attention_question.weight));
    for (std::size_t g = 0; g < 3; ++g) {
      std::vector<double> s(3, 0.0);
      for (std::size_t k = 0; k < 3; ++k)
        for (std::size_t m = 0; m < 3; ++m) s[k] += p.glimpse_scale[g][m] * pv[0][m] * pq[k][m];
      const auto want = oracle::softmax(s);
      Tape tape;
      const Var a = bilinear_attention_map(p, tape.constant(v), tape.constant(q), {true, true, true}, g);
      for (std::size_t k = 0; k < 3; ++k) CHECK(std::abs(a.value().at(0, k) - want[k]) < 1e-12);
    }
  }
}

TEST_CASE("attention map softmax is joint over the grid") {
  Rng rng(3);
  const auto p = make_bilinear(4, 4, 3, 1, 4, rng);
  Tape tape;
  const Var a = bilinear_attention_map(p, tape.constant(rng.normal_tensor({3, 4}, 1.0)),
                                       tape.constant(rng.normal_tensor({5, 4}, 1.0)),
                                       {true, true, true, false, false}, 0);
  double total = 0.0;
  for (double x : a.value().data()) total += x;
  CHECK(std::abs(total - 1.0) < 1e-9);
  for (std::size_t j = 0; j < 3; ++j) CHECK(a.value().at(j, 4) == 0.0);
}

TEST_CASE("fully masked pair set is an error") {
  Rng rng(4);
  const auto p = make_bilinear(4, 4, 3, 1, 4, rng);
  Tape tape;
  CHECK_THROWS_AS(bilinear_attention_map(p, tape.constant(rng.normal_tensor({2, 4}, 1.0)),
                                         tape.constant(rng.normal_tensor({2, 4}, 1.0)),
                                         {false, false}, 0),
                  MaskError);
  CHECK_THROWS_AS(bilinear_attention_map(p, tape.constant(rng.normal_tensor({2, 4}, 1.0)),
                                         tape.constant(rng.normal_tensor({2, 4}, 1.0)), {true}, 0),
                  DimensionError);
}

TEST_CASE("delta attention picks out one projected pair") {
  Rng rng(5);
  const auto p = make_bilinear(6, 5, 4, 2, 5, rng);
  const Tensor v = rng.normal_tensor({3, 6}, 1.0), q = rng.normal_tensor({4, 5}, 1.0);
  std::vector<double> delta(12, 0.0);
  delta[1 * 4 + 2] = 1.0;
  Tape tape;
  const Var f = glimpse_features(p, tape.constant(v), tape.constant(q),
                                 tape.constant(Tensor({3, 4}, delta)), 1);
  const auto pv = oracle::matmul(to_mat(v), to_mat(p.image_glimpse[1].weight));
  const auto pq = oracle::matmul(to_mat(q), to_mat(p.question_glimpse[1].weight));
  REQUIRE(f.shape() == Shape{1, 4});
  for (std::size_t m = 0; m < 4; ++m) CHECK(std::abs(f.value()[m] - pv[1][m] * pq[2][m]) < 1e-12);
}

TEST_CASE("zero image features give zero glimpse features") {
  Rng rng(6);
  const auto p = make_bilinear(6, 5, 4, 1, 5, rng);
  Tape tape;
  const Var f = glimpse_features(p, tape.constant(Tensor::zeros({2, 6})),
                                 tape.constant(rng.normal_tensor({3, 5}, 1.0)),
                                 tape.constant(Tensor::full({2, 3}, 1.0 / 6.0)), 0);
  for (double x : f.value().data()) CHECK(x == 0.0);
}

TEST_CASE("factorised glimpse features equal the literal double sum") {
  double worst = 0.0;
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    for (std::size_t nv : {1, 2, 4, 8}) {
      for (std::size_t nq : {1, 3, 8}) {
        if (nv * nq > 64) continue;
        Rng rng(seed * 100 + nv * 10 + nq);
        const auto p = make_bilinear(5, 6, 3, 2, 4, rng);
        const Tensor v = rng.normal_tensor({nv, 5}, 1.0), q = rng.normal_tensor({nq, 6}, 1.0);
        const Tensor a = random_distributions(rng, 1, nv * nq).reshaped({nv, nq});
        Tape tape;
        const Var f = glimpse_features(p, tape.constant(v), tape.constant(q), tape.constant(a), 1);
        const auto want = double_sum(to_mat(v), to_mat(q), to_mat(a), to_mat(p.image_glimpse[1].weight),
                                     to_mat(p.question_glimpse[1].weight));
        for (std::size_t m = 0; m < 3; ++m) worst = std::max(worst, std::abs(f.value()[m] - want[m]));
      }
    }
  }
  CHECK(worst < 1e-10);
}

TEST_CASE("glimpse features reject a mis-shaped map") {
  Rng rng(7);
  const auto p = make_bilinear(4, 4, 3, 1, 4, rng);
  Tape tape;
  CHECK_THROWS_AS(glimpse_features(p, tape.constant(rng.normal_tensor({2, 4}, 1.0)),
                                   tape.constant(rng.normal_tensor({3, 4}, 1.0)),
                                   tape.constant(Tensor::full({3, 2}, 1.0 / 6.0)), 0),
                  DimensionError);
}

TEST_CASE("fuse with one glimpse is a single bilinear attention") {
  Rng rng(8);
  const auto p = make_bilinear(6, 5, 4, 1, 5, rng);
  const Tensor v = rng.normal_tensor({2, 6}, 1.0), q = rng.normal_tensor({3, 5}, 1.0);
  const std::vector<bool> qm{true, true, false};
  Tape tape;
  const Var vi = tape.constant(v), qi = tape.constant(q);
  const auto b = fuse(p, vi, {true, true}, qi, qm);
  const Var a = bilinear_attention_map(p, vi, qi, qm, 0);
  const Var f = glimpse_features(p, vi, qi, a, 0);
  CHECK(b.distributions.shape() == Shape{1, 6});
  CHECK(max_abs_diff(b.distributions.value(), a.value().reshaped({1, 6})) == 0.0);
  CHECK(max_abs_diff(b.fused.value(), f.value()) == 0.0);
  const auto joint = oracle::matmul(to_mat(f.value()), to_mat(p.post.weight));
  for (std::size_t c = 0; c < 5; ++c)
    CHECK(std::abs(b.joint.value()[c] - (joint[0][c] + (*p.post.bias)[c])) < 1e-12);
}

TEST_CASE("fuse bundles are valid and deterministic") {
  const auto run = [] {
    Rng rng(9);
    const auto p = make_bilinear(6, 5, 4, 5, 5, rng);
    Tape tape;
    return fuse(p, tape.constant(rng.normal_tensor({2, 6}, 1.0)), {true, true},
                tape.constant(rng.normal_tensor({4, 5}, 1.0)), {true, true, true, false})
        .distributions.value();
  };
  const Tensor d = run();
  CHECK(max_abs_diff(d, run()) == 0.0);
  REQUIRE(d.shape() == Shape{5, 8});
  for (std::size_t g = 0; g < 5; ++g) {
    double total = 0.0;
    for (std::size_t c = 0; c < 8; ++c) total += d.at(g, c);
    CHECK(std::abs(total - 1.0) < 1e-9);
    CHECK(d.at(g, 3) == 0.0);
    CHECK(d.at(g, 7) == 0.0);
  }
}

TEST_CASE("fuse gradients match finite differences") {
  for (const char* name : {"fuse", "project_image+fuse", "orthogonality_loss"}) {
    const auto& reg = gradcheck_registry();
    const auto it = std::find_if(reg.begin(), reg.end(), [&](const GradCase& c) { return c.name == name; });
    REQUIRE(it != reg.end());
    for (std::uint64_t seed = 0; seed < 3; ++seed) {
      auto problem = it->make(seed);
      CHECK(check_gradients(problem).relative_error < 1e-4);
    }
  }
}

TEST_CASE("orthogonality loss boundary values") {
  CHECK(orthogonality_loss(Tensor::matrix({{0.2, 0.3, 0.5}})) == 0.0);
  CHECK(orthogonality_loss(Tensor::matrix({{0.2, 0.3, 0.5}, {0.2, 0.3, 0.5}})) == 1.0);
  CHECK(orthogonality_loss(Tensor::matrix({{1.0, 0.0}, {0.0, 1.0}})) == 0.0);
  for (std::size_t g : {2, 3, 5}) {
    Rng rng(g);
    const Tensor one = random_distributions(rng, 1, 7);
    std::vector<double> rows;
    for (std::size_t r = 0; r < g; ++r) rows.insert(rows.end(), one.data().begin(), one.data().end());
    CHECK(orthogonality_loss(Tensor({g, 7}, rows)) == static_cast<double>(g * (g - 1) / 2));
  }
}

TEST_CASE("orthogonality loss matches the pairwise oracle") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    Rng rng(seed);
    const Tensor p = random_distributions(rng, 3, 9);
    CHECK(std::abs(orthogonality_loss(p) - oracle::orthogonality(to_mat(p))) < 1e-12);
  }
}

TEST_CASE("orthogonality loss is bounded and permutation invariant") {
  Rng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const Tensor p = random_distributions(rng, 5, 6);
    const double loss = orthogonality_loss(p);
    CHECK(loss >= 0.0);
    CHECK(loss <= 10.0);
    std::vector<std::size_t> order{4, 2, 0, 3, 1};
    std::vector<double> shuffled;
    for (std::size_t r : order)
      for (std::size_t c = 0; c < 6; ++c) shuffled.push_back(p.at(r, c));
    CHECK(std::abs(orthogonality_loss(Tensor({5, 6}, shuffled)) - loss) < 1e-12);
  }
}

TEST_CASE("bilinear construction rejects zero glimpses") {
  Rng rng(12);
  CHECK_THROWS_AS(make_bilinear(4, 4, 2, 0, 4, rng), DimensionError);
}
