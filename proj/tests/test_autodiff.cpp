#include <doctest.h>

#include <cmath>
#include <functional>

#include "ctgen/ad/graph.hpp"
#include "ctgen/ad/nn.hpp"
#include "ctgen/ad/optim.hpp"
#include "ctgen/core/rng.hpp"

using namespace ctgen;
using namespace ctgen::ad;

namespace {

Tensor random_tensor(const Shape& shape, Rng& rng, float scale = 1.0f) {
  Tensor t(shape);
  for (int64_t i = 0; i < t.numel(); ++i) t[i] = rng.uniformf(-scale, scale);
  return t;
}

/// Central finite differences of a rebuilt scalar graph vs analytic grads.
void check_gradients(const std::function<Var()>& build, const std::vector<Var>& params, float rel_tol = 1e-2f,
                     float eps = 1e-3f) {
  Var loss = build();
  const std::vector<Tensor> analytic = grad_values(loss, params);
  for (size_t p = 0; p < params.size(); ++p) {
    for (int64_t j = 0; j < params[p]->value.numel(); ++j) {
      const float keep = params[p]->value[j];
      params[p]->value[j] = keep + eps;
      const float up = build()->value.item();
      params[p]->value[j] = keep - eps;
      const float down = build()->value.item();
      params[p]->value[j] = keep;
      const float fd = (up - down) / (2 * eps);
      const float an = analytic[p][j];
      const float denom = std::max({std::abs(fd), std::abs(an), 1e-2f});
      CHECK(std::abs(fd - an) / denom < rel_tol);
    }
  }
}

}  // namespace

TEST_CASE("elementwise chain gradients match finite differences") {
  Rng rng(11);
  Var a = leaf(random_tensor({6}, rng));
  Var b = leaf(random_tensor({6}, rng));
  auto build = [&] {
    Var x = add(mul(sigmoid(a), b), exp_v(mul_scalar(a, 0.3)));
    x = add(x, mul(tanh_v(b), silu(a)));
    return sum_all(square(x));
  };
  check_gradients(build, {a, b});
}

TEST_CASE("log, sqrt and div gradients") {
  Rng rng(12);
  Tensor pos({5});
  for (int i = 0; i < 5; ++i) pos[i] = rng.uniformf(0.5f, 2.0f);
  Var a = leaf(pos);
  Var b = leaf(random_tensor({5}, rng, 0.5f));
  auto build = [&] { return sum_all(div(log_v(a), add_scalar(square(b), 1.0))); };
  check_gradients(build, {a, b});
  auto build2 = [&] { return sum_all(sqrt_v(a)); };
  check_gradients(build2, {a});
}

TEST_CASE("matmul and linear gradients") {
  Rng rng(13);
  Var w = leaf(random_tensor({3, 4}, rng));
  Var x = leaf(random_tensor({2, 3}, rng));
  Var b = leaf(random_tensor({4}, rng));
  auto build = [&] { return mean_all(square(linear(x, w, b))); };
  check_gradients(build, {w, x, b});
}

TEST_CASE("bmm gradients") {
  Rng rng(14);
  Var a = leaf(random_tensor({2, 3, 4}, rng));
  Var b = leaf(random_tensor({2, 4, 2}, rng));
  auto build = [&] { return sum_all(square(bmm(a, b))); };
  check_gradients(build, {a, b});
}

TEST_CASE("conv2d gradients match finite differences") {
  Rng rng(15);
  Var x = leaf(random_tensor({1, 2, 4, 4}, rng));
  Var w = leaf(random_tensor({3, 2, 3, 3}, rng, 0.5f));
  Var b = leaf(random_tensor({3}, rng, 0.1f));
  auto build = [&] { return mean_all(square(conv2d(x, w, b, 1, 1))); };
  check_gradients(build, {x, w, b});

  SUBCASE("strided") {
    auto build2 = [&] { return sum_all(relu(conv2d(x, w, b, 2, 1))); };
    check_gradients(build2, {x, w, b});
  }
}

TEST_CASE("pool, upsample, concat, slice gradients") {
  Rng rng(16);
  Var x = leaf(random_tensor({2, 2, 4, 4}, rng));
  auto build = [&] {
    Var up = upsample_nearest2x(avg_pool2x2(x));
    Var cat = concat_channels({up, x});
    return sum_all(square(slice_channels(cat, 1, 3)));
  };
  check_gradients(build, {x});
}

TEST_CASE("layer norm and softmax gradients") {
  Rng rng(17);
  Var x = leaf(random_tensor({3, 5}, rng));
  Var gamma = leaf(random_tensor({5}, rng));
  Var beta = leaf(random_tensor({5}, rng));
  Var mix = constant(random_tensor({3, 5}, rng));  // keeps the loss non-degenerate
  auto build = [&] { return sum_all(mul(square(layer_norm(x, gamma, beta)), mix)); };
  check_gradients(build, {x, gamma, beta}, 2e-2f);

  Var y = leaf(random_tensor({3, 4}, rng));
  Var m = leaf(random_tensor({3, 4}, rng));
  auto build2 = [&] { return sum_all(mul(softmax_rows(y), m)); };
  check_gradients(build2, {y, m});
}

TEST_CASE("cross entropy value and gradient") {
  Rng rng(18);
  Var logits = leaf(random_tensor({4, 6}, rng));
  const std::vector<int64_t> targets{0, 5, 2, 2};
  // Oracle NLL computed the slow way.
  double want = 0.0;
  for (int r = 0; r < 4; ++r) {
    double denom = 0.0;
    for (int c = 0; c < 6; ++c) denom += std::exp(logits->value[r * 6 + c]);
    want -= std::log(std::exp(logits->value[r * 6 + targets[r]]) / denom);
  }
  want /= 4.0;
  Var loss = cross_entropy_rows(logits, targets);
  CHECK(loss->value.item() == doctest::Approx(want).epsilon(1e-4));
  auto build = [&] { return cross_entropy_rows(logits, targets); };
  check_gradients(build, {logits});
}

TEST_CASE("embedding gradient scatters into rows") {
  Var table = leaf(Tensor({4, 3}, std::vector<float>{0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 10, 11}));
  Var emb = embedding(table, {2, 2, 0});
  Var loss = sum_all(emb);
  const Tensor g = grad_values(loss, {table})[0];
  // Row 2 referenced twice, row 0 once, rows 1/3 never.
  CHECK(g[0] == 1.0f);
  CHECK(g[2 * 3 + 1] == 2.0f);
  CHECK(g[1 * 3 + 0] == 0.0f);
  CHECK(g[3 * 3 + 2] == 0.0f);
}

TEST_CASE("gather/scatter duality on a random map") {
  Rng rng(19);
  auto map = std::make_shared<std::vector<int64_t>>(std::vector<int64_t>{3, -1, 0, 0, 2, 5});
  Var x = leaf(random_tensor({6}, rng));
  auto build = [&] { return sum_all(square(gather(x, map, {6}))); };
  check_gradients(build, {x});
  auto build2 = [&] { return sum_all(square(scatter_add(x, map, {7}))); };
  check_gradients(build2, {x});
}

TEST_CASE("grad with create_graph supports differentiating a gradient norm") {
  // f(x) = sum(c * x^2): df/dx = 2cx, h = ||df/dx||^2 = sum 4c^2x^2,
  // dh/dx = 8c^2 x.
  Tensor cv({3}, std::vector<float>{0.5f, -1.5f, 2.0f});
  Var c = constant(cv);
  Var x = leaf(Tensor({3}, std::vector<float>{1.0f, 2.0f, -3.0f}));
  Var f = sum_all(mul(c, square(x)));
  Var gx = grad(f, {x}, /*create_graph=*/true)[0];
  Var h = sum_all(square(gx));
  const Tensor ghx = grad_values(h, {x})[0];
  for (int i = 0; i < 3; ++i)
    CHECK(ghx[i] == doctest::Approx(8.0f * cv[i] * cv[i] * x->value[i]).epsilon(1e-5));
}

TEST_CASE("double backprop through a conv critic matches finite differences") {
  Rng rng(20);
  ParamStore ps;
  Conv2dLayer c1(ps, "c1", 1, 2, 3, 2, 1, rng);
  LinearLayer fc(ps, "fc", 2 * 2 * 2, 1, rng);
  Var x = constant(random_tensor({1, 1, 4, 4}, rng));

  auto critic = [&](const Var& in) {
    Var h = leaky_relu(c1(in), 0.2);
    return sum_all(linear(reshape(h, {1, 8}), fc.w, fc.b));
  };
  auto build = [&] {
    Var xin = leaf(x->value);  // fresh differentiable input each rebuild
    Var out = critic(xin);
    Var gx = grad(out, {xin}, true)[0];
    return sum_all(square(gx));  // depends on critic parameters
  };
  check_gradients(build, ps.vars(), 2e-2f);
}

TEST_CASE("straight through estimator") {
  Var zhat = leaf(Tensor({4}, std::vector<float>{0.1f, 0.9f, -0.2f, 0.4f}));
  Tensor zq({4}, std::vector<float>{0.0f, 1.0f, 0.0f, 0.5f});
  Var st = straight_through(zhat, zq);
  for (int i = 0; i < 4; ++i) CHECK(st->value[i] == zq[i]);
  // loss = sum(st^2) -> d/dzhat = 2 * zq elementwise.
  Var loss = sum_all(square(st));
  const Tensor g = grad_values(loss, {zhat})[0];
  for (int i = 0; i < 4; ++i) CHECK(g[i] == doctest::Approx(2.0f * zq[i]));
}

TEST_CASE("adam descends a quadratic") {
  Var w = leaf(Tensor({2}, std::vector<float>{3.0f, -2.0f}));
  Adam opt({w}, AdamConfig{.lr = 0.05});
  for (int i = 0; i < 400; ++i) {
    Var loss = sum_all(square(w));
    opt.step(grad_values(loss, {w}));
  }
  CHECK(std::abs(w->value[0]) < 1e-2);
  CHECK(std::abs(w->value[1]) < 1e-2);
}

TEST_CASE("no-grad evaluation records no graph") {
  Var a = leaf(Tensor({2}, 1.0f));
  NoGradGuard guard;
  Var b = square(a);
  CHECK_FALSE(b->requires_grad);
  CHECK(b->parents.empty());
}
