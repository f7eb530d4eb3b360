#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <vector>

#include "osr/gradcheck.hpp"
#include "osr/graph.hpp"
#include "osr/rng.hpp"

using namespace osr;

namespace {

Tensor<double> random_tensor(Shape shape, Rng& rng, double lo = -1.0, double hi = 1.0,
                             bool rg = true) {
  Tensor<double> t = Tensor<double>::zeros(shape, rg);
  for (auto& v : t.data) v = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("conv2d with a one-hot center kernel is the identity") {
  Graph<double> g;
  Rng rng(7);
  auto x = g.leaf(random_tensor({2, 3, 4, 4}, rng));
  Tensor<double> k = Tensor<double>::zeros({3, 3, 3, 3});
  for (int f = 0; f < 3; ++f) k.data[((f * 3 + f) * 3 + 1) * 3 + 1] = 1.0;  // center tap, c == f
  auto y = conv2d(x, g.constant(k), g.constant(Tensor<double>::zeros({3})));
  const auto& xv = g.value(x);
  const auto& yv = g.value(y);
  for (size_t i = 0; i < xv.data.size(); ++i) CHECK(yv.data[i] == doctest::Approx(xv.data[i]).epsilon(1e-12));
}

TEST_CASE("dense identity affine") {
  Graph<double> g;
  auto x = g.leaf(Tensor<double>({1, 2}, {1.0, 2.0}));
  auto w = g.constant(Tensor<double>({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  auto b = g.constant(Tensor<double>({2}, {0.0, 0.0}));
  auto y = dense(x, w, b);
  CHECK(g.value(y).data == std::vector<double>{1.0, 2.0});
}

TEST_CASE("global average pooling is the arithmetic mean") {
  Graph<double> g;
  auto x = g.leaf(Tensor<double>({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0}));
  auto y = global_avg_pool(x);
  CHECK(g.value(y).data[0] == doctest::Approx(2.5));
}

TEST_CASE("backward of sum is all ones") {
  Graph<double> g;
  Rng rng(3);
  auto x = g.leaf(random_tensor({2, 3}, rng));
  auto s = sum(x);
  g.backward(s);
  for (double v : g.grad(x).data) CHECK(v == doctest::Approx(1.0));
}

TEST_CASE("backward of sum(x*x) is 2x") {
  Graph<double> g;
  auto x = g.leaf(Tensor<double>({1}, {3.0}, true));
  auto s = sum(mul(x, x));
  g.backward(s);
  CHECK(g.grad(x).data[0] == doctest::Approx(6.0));
}

TEST_CASE("softmax cross-entropy gradient equals p minus one-hot") {
  Graph<double> g;
  auto z = g.leaf(Tensor<double>({1, 2}, {0.0, 0.0}, true));
  auto loss = neg(pick(log_floored(softmax_rows(z)), {0}));
  CHECK(g.value(loss).data[0] == doctest::Approx(std::log(2.0)));
  g.backward(loss);
  auto gz = g.grad(z);
  CHECK(gz.data[0] == doctest::Approx(-0.5));
  CHECK(gz.data[1] == doctest::Approx(0.5));
}

TEST_CASE("grad_check on a linear graph is exact up to rounding") {
  Graph<double> g;
  Rng rng(11);
  auto x = g.leaf(random_tensor({5}, rng));
  auto y = sum(scale(x, 3.25));
  auto res = grad_check(g, y, x, 1e-5, 1e-9);
  CHECK(res.checked == 5);
  CHECK(res.excluded == 0);
  CHECK(res.max_rel_err < 1e-9);
}

TEST_CASE("relu at an exact zero input is excluded from grad_check") {
  Graph<double> g;
  auto x = g.leaf(Tensor<double>({3}, {0.5, 0.0, -0.7}, true));
  auto y = sum(relu(x));
  auto res = grad_check(g, y, x, 1e-5, 1e-6);
  CHECK(res.excluded == 3);  // the exact kink poisons the whole pass
  CHECK(res.checked == 0);
}

TEST_CASE("softmax rows are positive and sum to one") {
  Rng rng(21);
  for (int trial = 0; trial < 50; ++trial) {
    Graph<double> g;
    auto z = g.leaf(random_tensor({4, 6}, rng, -8.0, 8.0, false));
    auto p = softmax_rows(z);
    const auto& pv = g.value(p);
    for (int r = 0; r < 4; ++r) {
      double s = 0.0;
      for (int c = 0; c < 6; ++c) {
        CHECK(pv.at(r, c) > 0.0);
        s += pv.at(r, c);
      }
      CHECK(std::abs(s - 1.0) < 1e-9);
    }
  }
}

TEST_CASE("l2 normalization yields unit rows; zero rows are an error") {
  Rng rng(22);
  for (int trial = 0; trial < 50; ++trial) {
    Graph<double> g;
    auto x = g.leaf(random_tensor({3, 5}, rng, 0.1, 2.0, false));
    auto y = l2_normalize(x);
    const auto& yv = g.value(y);
    for (int r = 0; r < 3; ++r) {
      double s = 0.0;
      for (int c = 0; c < 5; ++c) s += yv.at(r, c) * yv.at(r, c);
      CHECK(std::abs(std::sqrt(s) - 1.0) < 1e-9);
    }
  }
  Graph<double> g;
  auto x = g.leaf(Tensor<double>::zeros({2, 3}));
  CHECK_THROWS_AS(l2_normalize(x), NumericError);
}

TEST_CASE("fan-out gradients accumulate like a duplicated-node construction") {
  Rng rng(31);
  Tensor<double> xt = random_tensor({4}, rng, 0.2, 1.5);

  Graph<double> shared;
  auto x = shared.leaf(xt);
  auto out = sum(add(relu(x), mul(x, x)));
  shared.backward(out);
  auto gx = shared.grad(x);

  Graph<double> dup;
  auto x1 = dup.leaf(xt);
  auto x2 = dup.leaf(xt);
  auto out2 = sum(add(relu(x1), mul(x2, x2)));
  dup.backward(out2);
  auto g1 = dup.grad(x1);
  auto g2 = dup.grad(x2);

  for (int i = 0; i < 4; ++i) {
    CHECK(gx.data[i] == doctest::Approx(g1.data[i] + g2.data[i]).epsilon(1e-12));
  }
}

TEST_CASE("backward twice without a new forward is an error") {
  Graph<double> g;
  auto x = g.leaf(Tensor<double>({2}, {1.0, 2.0}, true));
  auto s = sum(x);
  g.backward(s);
  CHECK_THROWS_AS(g.backward(s), ConfigError);
  g.forward();
  CHECK_NOTHROW(g.backward(s));
}

TEST_CASE("backward on a non-scalar output is an error") {
  Graph<double> g;
  auto x = g.leaf(Tensor<double>({2}, {1.0, 2.0}, true));
  auto y = relu(x);
  CHECK_THROWS_AS(g.backward(y), ConfigError);
}

TEST_CASE("shape mismatches report the node and shapes") {
  Graph<double> g;
  auto a = g.leaf(Tensor<double>::zeros({2, 3}));
  auto b = g.leaf(Tensor<double>::zeros({2, 2}));
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("matmul"), ShapeError);
  CHECK_THROWS_AS(add(a, b), ShapeError);
}

TEST_CASE("non-finite forward values are reported with the node") {
  Graph<double> g;
  auto x = g.leaf(Tensor<double>({1}, {1e308}));
  CHECK_THROWS_AS(mul(x, x), NumericError);
}

TEST_CASE("named inputs drive re-execution") {
  Graph<double> g;
  auto x = g.leaf(Tensor<double>({2}, {1.0, 2.0}), "x");
  auto s = sum(mul(x, x));
  CHECK(scalar_of(s) == doctest::Approx(5.0));
  g.forward({{"x", Tensor<double>({2}, {3.0, 4.0})}});
  CHECK(scalar_of(s) == doctest::Approx(25.0));
}

TEST_CASE("max-pool ties route gradient to the first row-major maximum") {
  Graph<double> g;
  auto x = g.leaf(Tensor<double>({1, 1, 2, 2}, {1.0, 1.0, 1.0, 1.0}, true));
  auto s = sum(maxpool2(x));
  CHECK(scalar_of(s) == doctest::Approx(1.0));
  g.backward(s);
  CHECK(g.grad(x).data == std::vector<double>{1.0, 0.0, 0.0, 0.0});
}

// Every primitive against central differences at random non-kink points.
TEST_CASE("per-primitive gradients match central differences over 100 seeds") {
  const double eps = 1e-5, tol = 1e-6;
  int total_checked = 0;
  for (int seed = 0; seed < 100; ++seed) {
    Rng rng(1000 + seed);

    auto check = [&](Graph<double>& g, Value<double> out, std::vector<Value<double>> leaves) {
      for (auto leaf : leaves) {
        auto res = grad_check(g, out, leaf, eps, tol);
        CAPTURE(seed);
        CHECK(res.max_rel_err <= tol);
        total_checked += res.checked;
      }
    };

    {
      Graph<double> g;
      auto x = g.leaf(random_tensor({1, 2, 6, 6}, rng));
      auto k = g.leaf(random_tensor({3, 2, 3, 3}, rng));
      auto b = g.leaf(random_tensor({3}, rng));
      auto mask = g.constant(random_tensor({1, 3, 6, 6}, rng, -1, 1, false));
      check(g, sum(mul(conv2d(x, k, b), mask)), {x, k, b});
    }
    {
      Graph<double> g;
      auto x = g.leaf(random_tensor({1, 2, 4, 4}, rng));
      check(g, sum(maxpool2(x)), {x});
    }
    {
      Graph<double> g;
      auto x = g.leaf(random_tensor({3, 4}, rng));
      check(g, sum(relu(x)), {x});
    }
    {
      Graph<double> g;
      auto x = g.leaf(random_tensor({3, 4}, rng));
      auto w = g.leaf(random_tensor({4, 2}, rng));
      auto b = g.leaf(random_tensor({2}, rng));
      auto mask = g.constant(random_tensor({3, 2}, rng, -1, 1, false));
      check(g, sum(mul(dense(x, w, b), mask)), {x, w, b});
    }
    {
      Graph<double> g;
      auto a = g.leaf(random_tensor({2, 3}, rng));
      auto b = g.leaf(random_tensor({3, 2}, rng));
      check(g, sum(matmul(a, b)), {a, b});
    }
    {
      Graph<double> g;
      auto x = g.leaf(random_tensor({2, 3, 4, 4}, rng));
      check(g, sum(global_avg_pool(x)), {x});
    }
    {
      Graph<double> g;
      auto z = g.leaf(random_tensor({3, 4}, rng, -2, 2));
      auto mask = g.constant(random_tensor({3, 4}, rng, -1, 1, false));
      check(g, sum(mul(softmax_rows(z), mask)), {z});
    }
    {
      Graph<double> g;
      auto x = g.leaf(random_tensor({3, 4}, rng, 0.3, 2.0));
      auto mask = g.constant(random_tensor({3, 4}, rng, -1, 1, false));
      check(g, sum(mul(l2_normalize(x, 1), mask)), {x});
      Graph<double> g0;
      auto x0 = g0.leaf(random_tensor({3, 4}, rng, 0.3, 2.0));
      auto mask0 = g0.constant(random_tensor({3, 4}, rng, -1, 1, false));
      check(g0, sum(mul(l2_normalize(x0, 0), mask0)), {x0});
    }
    {
      Graph<double> g;
      auto a = g.leaf(random_tensor({3, 4}, rng));
      auto b = g.leaf(random_tensor({2, 4}, rng));
      auto mask = g.constant(random_tensor({3, 2}, rng, -1, 1, false));
      check(g, sum(mul(pairwise_sqdist(a, b), mask)), {a, b});
    }
    {
      Graph<double> g;
      auto x = g.leaf(random_tensor({3, 4}, rng));
      std::vector<int> cols = {rng.below_int(4), rng.below_int(4), rng.below_int(4)};
      check(g, sum(pick(x, cols)), {x});
    }
    {
      Graph<double> g;
      auto x = g.leaf(random_tensor({5, 3}, rng));
      check(g, sum(rows(x, 1, 3)), {x});
    }
    {
      Graph<double> g;
      auto a = g.leaf(random_tensor({2, 3}, rng));
      auto b = g.leaf(random_tensor({2, 3}, rng));
      auto m = g.constant(random_tensor({2, 3}, rng, -1, 1, false));
      check(g, sum(mul(add(a, b), m)), {a, b});
      Graph<double> g2;
      auto a2 = g2.leaf(random_tensor({2, 3}, rng));
      auto b2 = g2.leaf(random_tensor({2, 3}, rng));
      check(g2, sum(mul(sub(a2, b2), b2)), {a2, b2});
    }
    {
      Graph<double> g;
      auto x = g.leaf(random_tensor({2, 3}, rng));
      check(g, sum(scale(neg(x), 1.7)), {x});
    }
    {
      Graph<double> g;
      auto x = g.leaf(random_tensor({2, 3}, rng, 0.5, 1.5));
      check(g, mean(log_floored(x)), {x});
    }
  }
  CHECK(total_checked > 10000);
}
