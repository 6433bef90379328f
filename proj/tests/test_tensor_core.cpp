#include <doctest.h>

#include <cmath>

#include "fisale/layers.hpp"
#include "fisale/ops.hpp"
#include "support.hpp"

using namespace fisale;
using fisale::test::random_tensor;

TEST_CASE("linear_forward examples") {
  SUBCASE("identity weight") {
    Tensor y = linear_forward(Tensor::matrix({{1, 2}}), Tensor::identity(2), Tensor::row({0, 0}));
    CHECK(y == Tensor::matrix({{1, 2}}));
  }
  SUBCASE("diagonal weight plus bias") {
    Tensor y = linear_forward(Tensor::matrix({{1, 0}, {0, 1}}), Tensor::matrix({{2, 0}, {0, 3}}),
                              Tensor::row({1, 1}));
    CHECK(y == Tensor::matrix({{3, 1}, {1, 4}}));
  }
  SUBCASE("zero input gives the bias on every row") {
    Rng rng(3);
    Tensor y = linear_forward(Tensor({4, 3}), random_tensor({3, 1}, rng), Tensor::row({5}));
    REQUIRE(y.shape() == Shape{4, 1});
    for (std::size_t i = 0; i < 4; ++i) CHECK(y(i, 0) == 5.0);
  }
  SUBCASE("shape mismatch") {
    CHECK_THROWS_AS(linear_forward(Tensor({2, 3}), Tensor({2, 2}), Tensor({2})), DimensionError);
    CHECK_THROWS_AS(linear_forward(Tensor({2, 2}), Tensor({2, 2}), Tensor({3})), DimensionError);
  }
}

TEST_CASE("softmax examples") {
  Tensor a = softmax(Tensor::matrix({{0, 0, 0}}), 1);
  for (double v : a.data()) CHECK(v == doctest::Approx(1.0 / 3.0).epsilon(1e-15));

  Tensor b = softmax(Tensor::matrix({{std::log(1.0), std::log(2.0), std::log(3.0)}}), 1);
  CHECK(b[0] == doctest::Approx(1.0 / 6.0).epsilon(1e-14));
  CHECK(b[1] == doctest::Approx(2.0 / 6.0).epsilon(1e-14));
  CHECK(b[2] == doctest::Approx(3.0 / 6.0).epsilon(1e-14));

  // Column axis, and large logits that would overflow a naive exp.
  Tensor c = softmax(Tensor::matrix({{1000, -5}, {1000, 5}}), 0);
  CHECK(c(0, 0) == doctest::Approx(0.5));
  CHECK(c(1, 0) == doctest::Approx(0.5));
  CHECK(c(0, 1) + c(1, 1) == doctest::Approx(1.0));
  CHECK(c.all_finite());
}

TEST_CASE("ffn_forward") {
  Rng rng(5);
  ParameterStore store;
  FfnParams p = make_ffn(store, "ffn", 3, 7, 2, rng);
  Tensor x = random_tensor({4, 3}, rng);

  SUBCASE("zero weights and biases give zero output") {
    for (auto& e : store) e.value.fill(0.0);
    Graph g;
    Var y = ffn_forward(g, store, p, g.constant(x));
    CHECK(y.shape() == Shape{4, 2});
    for (double v : y.value().data()) CHECK(v == 0.0);
  }
  SUBCASE("zero hidden path leaves the output bias") {
    store.at(p.first.weight).value.fill(0.0);
    store.at(p.first.bias).value.fill(0.0);
    Graph g;
    Var y = ffn_forward(g, store, p, g.constant(x));
    const Tensor& b = store.at(p.second.bias).value;
    for (std::size_t i = 0; i < 4; ++i) {
      for (std::size_t j = 0; j < 2; ++j) CHECK(y.value()(i, j) == b[j]);
    }
  }
  SUBCASE("matches a direct evaluation") {
    Graph g;
    Var y = ffn_forward(g, store, p, g.constant(x));
    Tensor h = linear_forward(x, store.at(p.first.weight).value, store.at(p.first.bias).value);
    for (double& v : h.storage()) v = 0.5 * v * (1.0 + std::erf(v / std::sqrt(2.0)));
    Tensor expect =
        linear_forward(h, store.at(p.second.weight).value, store.at(p.second.bias).value);
    CHECK(max_abs_diff(y.value(), expect) < 1e-14);
  }
}

TEST_CASE("backward examples") {
  Rng rng(7);
  ParameterStore store;
  const std::size_t x = store.add("x", random_tensor({3, 2}, rng));

  SUBCASE("sum gives ones") {
    Graph g;
    g.backward(ops::sum(g.parameter(store, x)));
    for (double v : store.at(x).grad.data()) CHECK(v == 1.0);
  }
  SUBCASE("half squared norm gives x") {
    Graph g;
    g.backward(ops::scale(ops::sum(ops::square(g.parameter(store, x))), 0.5));
    CHECK(max_abs_diff(store.at(x).grad, store.at(x).value) < 1e-15);
  }
  SUBCASE("gradients accumulate until reset") {
    for (int i = 0; i < 2; ++i) {
      Graph g;
      g.backward(ops::sum(g.parameter(store, x)));
    }
    for (double v : store.at(x).grad.data()) CHECK(v == 2.0);
    store.zero_grad();
    for (double v : store.at(x).grad.data()) CHECK(v == 0.0);
  }
  SUBCASE("errors") {
    Graph empty;
    Graph g;
    Var v = g.parameter(store, x);
    CHECK_THROWS_AS(g.backward(v), DimensionError);
    CHECK_THROWS(empty.backward(Var{}));
  }
}

TEST_CASE("grad_check on a linear map is tight") {
  Rng rng(11);
  ParameterStore store;
  LinearParams lin = make_linear(store, "lin", 4, 3, rng);
  const Tensor x = random_tensor({5, 4}, rng);
  const Tensor target = random_tensor({5, 3}, rng);
  auto build = [&](Graph& g, ParameterStore& s) {
    Var y = apply_linear(g, s, lin, g.constant(x));
    return ops::sum(ops::mul(y, g.constant(target)));
  };
  GradCheckReport r = grad_check(build, store, 1e-8);
  CHECK(r.entries.size() == 2);
  CHECK(r.passed());
  CHECK(r.worst() < 1e-8);
}

TEST_CASE("grad_check flags a corrupted gradient rule") {
  Rng rng(13);
  ParameterStore store;
  const std::size_t x = store.add("x", random_tensor({2, 3}, rng, 0.5, 1.5));
  // Cube with a backward rule that is off by a factor of two.
  auto broken_cube = [](Var a) {
    Graph& g = *a.graph;
    Tensor out = a.value();
    for (double& v : out.storage()) v = v * v * v;
    const int ia = a.id;
    return g.push(std::move(out), {a}, [ia](Graph& gr, int, const Tensor& dy) {
      Tensor dx = gr.value(ia);
      for (std::size_t i = 0; i < dx.size(); ++i) dx[i] = 6.0 * dx[i] * dx[i] * dy[i];
      gr.accumulate(ia, dx);
    });
  };
  auto build = [&](Graph& g, ParameterStore& s) {
    return ops::sum(broken_cube(g.parameter(s, x)));
  };
  GradCheckReport r = grad_check(build, store, 1e-4);
  CHECK_FALSE(r.passed());
  CHECK(r.worst() == doctest::Approx(0.5).epsilon(1e-6));
}

TEST_CASE("grad_check covers every differentiable op") {
  Rng rng(17);
  ParameterStore store;
  const std::size_t a = store.add("a", random_tensor({4, 3}, rng));
  const std::size_t b = store.add("b", random_tensor({3, 4}, rng));
  const std::size_t c = store.add("c", random_tensor({4, 3}, rng, 0.5, 1.5));
  const std::size_t bias = store.add("bias", random_tensor({3}, rng));
  const std::size_t w = store.add("w", Tensor::scalar(0.7));
  const std::size_t w0 = store.add("w0", Tensor::scalar(-0.2));
  const std::size_t mix = store.add("mix", random_tensor({4, 2}, rng));
  const std::vector<std::size_t> index{1, 2, 0, 3, 3, 0, 2, 1};
  const Tensor probe = random_tensor({4, 3}, rng);

  auto build = [&](Graph& g, ParameterStore& s) {
    Var va = g.parameter(s, a), vb = g.parameter(s, b), vc = g.parameter(s, c);
    Var prod = ops::matmul(va, vb);                 // 4x4
    Var back = ops::matmul(prod, va, true, false);  // 4x3
    Var t = ops::add(ops::transpose(ops::transpose(back)), vc);
    t = ops::sub(ops::mul(t, vc), ops::scale(va, 0.3));
    t = ops::add_row(t, g.parameter(s, bias));
    t = ops::scalar_affine(t, g.parameter(s, w), g.parameter(s, w0));
    Var sm = ops::add(ops::softmax(t, 0), ops::softmax(t, 1));
    Var ge = ops::gelu(t);
    Var rt = ops::sqrt(ops::add_constant(ops::square(vc), Tensor({4, 3}, 0.1)));
    const std::array<Var, 2> rows{sm, ge};
    Var stacked = ops::concat_rows(rows);  // 8x3
    Var top = ops::slice_rows(stacked, 2, 4);
    const std::array<Var, 2> cols{top, rt};
    Var wide = ops::concat_cols(cols);  // 4x6
    Var part = ops::slice_cols(wide, 1, 3);
    auto chunks = ops::chunk_rows(part, 2);
    Var mixed = ops::neighbor_mix(ops::softmax(g.parameter(s, mix), 1), part, index);
    Var loss = ops::add(ops::sum(ops::mul(chunks[0], chunks[1])), ops::mean(ops::square(mixed)));
    return ops::add(loss, ops::sum(ops::mul(part, g.constant(probe))));
  };
  GradCheckReport r = grad_check(build, store, 1e-4);
  for (const auto& e : r.entries) CHECK_MESSAGE(e.max_relative_error <= 1e-6, e.name);
}

TEST_CASE("gradient linearity") {
  Rng rng(19);
  ParameterStore store;
  const std::size_t x = store.add("x", random_tensor({3, 3}, rng));
  auto f1 = [&](Graph& g) { return ops::sum(ops::gelu(g.parameter(store, x))); };
  auto f2 = [&](Graph& g) {
    Var v = g.parameter(store, x);
    return ops::mean(ops::square(ops::softmax(ops::matmul(v, v), 1)));
  };
  {
    Graph g;
    g.backward(f1(g));
  }
  {
    Graph g;
    g.backward(f2(g));
  }
  const Tensor separate = store.at(x).grad;
  store.zero_grad();
  {
    Graph g;
    g.backward(ops::add(f1(g), f2(g)));
  }
  CHECK(max_abs_diff(separate, store.at(x).grad) <= 1e-12);
}
