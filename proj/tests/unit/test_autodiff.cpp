#include <doctest.h>

#include <cmath>
#include <random>

#include "oreo/error.hpp"
#include "oreo/numerics/gradcheck.hpp"
#include "oreo/numerics/ops.hpp"

using namespace oreo;
using namespace oreo::num;

namespace {

Tensor random_tensor(std::mt19937_64& rng, Shape shape, double sd = 1.0) {
  std::normal_distribution<double> nd(0.0, sd);
  Tensor t(std::move(shape));
  for (double& e : t.data()) e = nd(rng);
  return t;
}

}  // namespace

TEST_CASE("gradient of sum is all ones") {
  std::mt19937_64 rng(1);
  Tape t;
  Var x = t.variable(random_tensor(rng, {3, 4}));
  t.backward(sum(x));
  const Tensor g = t.grad(x);
  for (double v : g.data()) CHECK(v == 1.0);
}

TEST_CASE("cross-entropy gradient is softmax minus target") {
  std::mt19937_64 rng(2);
  for (int trial = 0; trial < 10; ++trial) {
    Tensor logits = random_tensor(rng, {1, 6}, 3.0);
    const std::size_t target = rng() % 6;
    Tape t;
    Var x = t.variable(logits);
    t.backward(cross_entropy(x, {target}));
    Tensor p = softmax_values(logits, 1);
    Tensor g = t.grad(x);
    for (std::size_t j = 0; j < 6; ++j) {
      CHECK(std::abs(g[j] - (p[j] - (j == target ? 1.0 : 0.0))) < 1e-14);
    }
  }
}

TEST_CASE("backward requires a scalar loss") {
  Tape t;
  Var x = t.variable(Tensor(Shape{2}, 1.0));
  CHECK_THROWS_AS(t.backward(x), ShapeError);
}

TEST_CASE("parameters accumulate across uses and frozen parameters receive nothing") {
  ParamSet ps;
  auto& w = ps.add("w", Tensor::vector({1.0, 2.0}));
  auto& f = ps.add("f", Tensor::vector({3.0, 4.0}));
  f.trainable = false;
  Tape t;
  Var a = t.param(w);
  Var loss = sum(add(mul(a, t.param(f)), a));
  t.backward(loss);
  CHECK(w.grad == Tensor::vector({4.0, 5.0}));
  CHECK(f.grad == Tensor::vector({0.0, 0.0}));
}

// Each composite below exercises a group of primitives; the finite-difference
// oracle only ever evaluates forward values.
TEST_CASE("primitive adjoints match central differences over 20 seeds") {
  for (std::uint64_t seed = 0; seed < 20; ++seed) {
    std::mt19937_64 rng(seed);
    ParamSet ps;
    auto& x = ps.add("x", random_tensor(rng, {5, 8}));
    auto& w = ps.add("w", random_tensor(rng, {8, 8}, 0.4));
    auto& b = ps.add("b", random_tensor(rng, {8}));
    auto& g = ps.add("g", random_tensor(rng, {8}));
    auto& v = ps.add("v", random_tensor(rng, {8}));
    auto& lg = ps.add("lg", random_tensor(rng, {5, 3}));
    auto& e = ps.add("e", random_tensor(rng, {3, 4}));
    const Tensor target = softmax_values(random_tensor(rng, {5, 3}), 1);
    const Index gidx{2, 0, 4, 2};
    const Index sidx{1, 0, 1, 3, 3, 0, 2, 1};

    auto loss_fn = [&](Tape& t) {
      Var vx = t.param(x);
      Var h = linear(vx, t.param(w), t.param(b));
      h = layer_norm(gelu(h), t.param(g), t.param(b));
      Var att = attention(h, matmul(vx, t.param(w)), h, 2);
      Var s1 = sum(mul(softmax(att, 1), mul_cols(att, t.param(v))));
      Var s2 = sum(log_softmax(matmul_nt(att, vx), 0));
      // gather rows, scatter along columns, normalise with a fallback
      Var pos = exp(gather(att, gidx, 0));
      Var scat = scatter_add(pos, sidx, 4, 1);
      Var norm = l1_normalize(scat, 1, t.constant(Tensor(Shape{4, 4}, 0.25)));
      Var s3 = sum(mul(norm, matmul(gather(t.param(lg), {0, 1, 2, 3}, 0), t.param(e))));
      Var s4 = soft_cross_entropy(t.param(lg), target);
      Var s5 = cross_entropy(t.param(lg), {0, 2, 1, 1, 2});
      Var rows = set_rows(vx, {1, 3}, scale(gather(h, {0, 2}, 0), 0.5));
      Var s6 = mean(mul(rows, rows));
      Var s7 = sum(mlp_project(gather(h, {1}, 0), t.param(w), t.param(b), t.param(w), t.param(v)));
      const Var terms[] = {s1, s2, s3, s4, s5, s6, scale(s7, 0.1), sum(sub(exp(t.param(v)), t.param(g)))};
      return add_n(t, terms);
    };
    GradCheckOptions opts;
    opts.seed = seed;
    opts.floor = 1e-5;
    auto res = check_gradients(ps, loss_fn, opts);
    INFO("seed " << seed << " worst " << res.worst.param << "[" << res.worst.coord
                 << "] analytic " << res.worst.analytic << " numeric " << res.worst.numeric);
    CHECK(res.max_rel_error < 1e-4);
    CHECK(res.checked == ps.num_scalars());
  }
}

TEST_CASE("l1_normalize dead slice passes its gradient to the fallback") {
  Tape t;
  Var x = t.variable(Tensor::vector({0.0, 0.0}));
  Var fb = t.variable(Tensor::vector({0.3, 0.7}));
  Var y = l1_normalize(x, 0, fb);
  t.backward(sum(mul(y, t.constant(Tensor::vector({2.0, 5.0})))));
  CHECK(t.grad(fb) == Tensor::vector({2.0, 5.0}));
  CHECK(t.grad(x) == Tensor::vector({0.0, 0.0}));
}

TEST_CASE("quadratic loss is checked to near machine precision") {
  ParamSet ps;
  ps.add("q", Tensor::vector({0.5, -1.25, 2.0}));
  auto res = check_gradients(ps, [&](Tape& t) {
    Var q = t.param(ps.get("q"));
    return sum(mul(q, q));
  });
  CHECK(res.max_rel_error < 1e-8);
}
