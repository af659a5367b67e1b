#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <random>

#include "sidlab/tensor.hpp"

using namespace sidlab;

namespace {

Tensor randn(std::vector<int> shape, std::mt19937_64& rng, double scale = 1.0) {
  std::normal_distribution<double> g(0.0, scale);
  Tensor t(std::move(shape));
  for (std::int64_t i = 0; i < t.size(); ++i) t[i] = g(rng);
  return t;
}

}  // namespace

TEST_CASE("relu forward") {
  Tape tape;
  const int x = tape.leaf(Tensor({3}, {-1.0, 0.0, 2.0}));
  const Tensor& y = tape.value(tape.relu(x));
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 2.0);
}

TEST_CASE("softmax of equal logits is uniform") {
  Tape tape;
  const int x = tape.leaf(Tensor({2}, {0.0, 0.0}));
  const Tensor& y = tape.value(tape.softmax(x));
  CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("identity affine map") {
  Tape tape;
  const int x = tape.leaf(Tensor({1, 2}, {3.0, 4.0}));
  const int w = tape.leaf(Tensor({2, 2}, {1.0, 0.0, 0.0, 1.0}));
  const int b = tape.leaf(Tensor({2}, {0.0, 0.0}));
  const Tensor& y = tape.value(tape.add(tape.matmul(x, w), b));
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 4.0);
}

TEST_CASE("d/dx x*x at 3 is 6") {
  Tensor x = Tensor::scalar(3.0);
  x.requires_grad = true;
  Tape tape;
  const int xn = tape.leaf(x);
  const int y = tape.mul(xn, xn);
  tape.backward(y);
  CHECK(tape.grad(xn)[0] == doctest::Approx(6.0).epsilon(1e-15));
}

TEST_CASE("relu derivative in the inactive region and at zero") {
  for (double v : {-1.0, 0.0}) {
    Tensor x = Tensor::scalar(v);
    x.requires_grad = true;
    Tape tape;
    const int xn = tape.leaf(x);
    tape.backward(tape.relu(xn));
    CHECK(tape.grad(xn)[0] == 0.0);
  }
}

TEST_CASE("cross-entropy gradient equals softmax minus one-hot") {
  Tensor logits({1, 2}, {1.0, 2.0});
  logits.requires_grad = true;
  Tape tape;
  const int ln = tape.leaf(logits);
  tape.backward(tape.cross_entropy(ln, {0}));
  const Tensor& g = tape.grad(ln);
  const double e1 = std::exp(1.0), e2 = std::exp(2.0);
  const double p0 = e1 / (e1 + e2), p1 = e2 / (e1 + e2);
  CHECK(g[0] == doctest::Approx(p0 - 1.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(p1).epsilon(1e-12));

  // finite-difference oracle
  auto f = [](const Tensor& p) {
    Tape t;
    const int n = t.leaf(p);
    return t.value(t.cross_entropy(n, {0})).item();
  };
  const double h = 1e-6;
  for (int i = 0; i < 2; ++i) {
    Tensor hi({1, 2}, {1.0, 2.0}), lo({1, 2}, {1.0, 2.0});
    hi[i] += h;
    lo[i] -= h;
    const double fd = (f(hi) - f(lo)) / (2 * h);
    CHECK(g[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("grad_check: quadratic form") {
  std::mt19937_64 rng(7);
  const Tensor a = randn({4, 4}, rng);
  const Tensor x0 = randn({1, 4}, rng);
  auto build = [&](Tape& t, int x) {
    const int an = t.leaf(a);
    const int xa = t.matmul(x, an);
    return t.sum(t.mul(xa, x));
  };
  CHECK(grad_check(build, x0, 1e-5) <= 1e-6);
}

TEST_CASE("grad_check: linear map is exact") {
  std::mt19937_64 rng(8);
  const Tensor a = randn({6, 3}, rng);
  const Tensor x0 = randn({1, 6}, rng);
  auto build = [&](Tape& t, int x) { return t.sum(t.matmul(x, t.leaf(a))); };
  CHECK(grad_check(build, x0, 1e-5) <= 1e-10);
}

TEST_CASE("grad_check: softmax cross-entropy MLP 8-8-3") {
  std::mt19937_64 rng(9);
  const Tensor w1 = randn({8, 8}, rng, 0.5);
  const Tensor b1 = randn({8}, rng, 0.1);
  const Tensor w2 = randn({8, 3}, rng, 0.5);
  const Tensor b2 = randn({3}, rng, 0.1);
  // nudge the input away from relu kinks
  Tensor x0 = randn({1, 8}, rng);
  auto build = [&](Tape& t, int x) {
    const int h = t.relu(t.add(t.matmul(x, t.leaf(w1)), t.leaf(b1)));
    const int logits = t.add(t.matmul(h, t.leaf(w2)), t.leaf(b2));
    return t.cross_entropy(logits, {1});
  };
  CHECK(grad_check(build, x0, 1e-5) <= 1e-5);
}

TEST_CASE("grad_check holds for every primitive over random points") {
  std::mt19937_64 rng(1234);
  const Tensor a_const = randn({3, 3}, rng);
  const Tensor kernel = randn({2, 2}, rng);
  struct Probe {
    const char* name;
    std::vector<int> shape;
    std::function<int(Tape&, int)> build;
  };
  std::vector<Probe> probes;
  probes.push_back({"matmul", {1, 3}, [&](Tape& t, int x) {
                      return t.sum(t.matmul(x, t.leaf(a_const)));
                    }});
  probes.push_back({"add_bias", {2, 3}, [&](Tape& t, int x) {
                      Tensor b({3}, {0.3, -0.2, 1.0});
                      return t.sum(t.add(x, t.leaf(b)));
                    }});
  probes.push_back({"sub_mul", {4}, [&](Tape& t, int x) {
                      Tensor c({4}, {2.0, -1.0, 0.5, 3.0});
                      const int cn = t.leaf(c);
                      return t.sum(t.mul(t.sub(x, cn), x));
                    }});
  probes.push_back({"relu", {5}, [&](Tape& t, int x) {
                      return t.sum(t.mul(t.relu(x), x));
                    }});
  probes.push_back({"tanh", {5}, [&](Tape& t, int x) {
                      return t.sum(t.tanh_op(x));
                    }});
  probes.push_back({"softmax", {1, 4}, [&](Tape& t, int x) {
                      Tensor m({1, 4}, {0.1, 0.4, -0.3, 0.2});
                      return t.sum(t.mul(t.softmax(x), t.leaf(m)));
                    }});
  probes.push_back({"scale_select", {6}, [&](Tape& t, int x) {
                      return t.add(t.select(t.scale(x, 2.5), 3),
                                   t.select(x, 0));
                    }});
  probes.push_back({"scalar_mul", {1}, [&](Tape& t, int s) {
                      Tensor v({3}, {1.0, 2.0, 3.0});
                      return t.sum(t.scalar_mul(s, t.leaf(v)));
                    }});
  probes.push_back({"cross_entropy", {1, 4}, [&](Tape& t, int x) {
                      return t.cross_entropy(x, {2});
                    }});
  probes.push_back({"conv2d", {4, 4}, [&](Tape& t, int x) {
                      Tensor m({2, 2}, {0.5, -1.0, 0.25, 2.0});
                      return t.sum(t.mul(t.conv2d_fixed(x, kernel), t.leaf(m)));
                    }});
  probes.push_back({"reshape_concat", {2, 2}, [&](Tape& t, int x) {
                      const int r = t.reshape(x, {1, 4});
                      const int c = t.concat_cols({r, r});
                      return t.sum(c);
                    }});

  int points = 0;
  for (const Probe& p : probes) {
    for (int rep = 0; rep < 10; ++rep) {
      // keep points away from relu kinks
      Tensor x0 = randn(p.shape, rng);
      for (std::int64_t i = 0; i < x0.size(); ++i)
        if (std::fabs(x0[i]) < 0.05) x0[i] += 0.1;
      const double err = grad_check(p.build, x0, 1e-5);
      INFO(p.name);
      CHECK(err <= 1e-5);
      ++points;
    }
  }
  CHECK(points >= 100);
}

TEST_CASE("backward of a sum equals the sum of backwards") {
  std::mt19937_64 rng(21);
  const Tensor a = randn({3, 3}, rng);
  const Tensor x0 = randn({1, 3}, rng);

  auto grad_of = [&](auto&& builder) {
    Tensor x = x0;
    x.requires_grad = true;
    Tape t;
    const int xn = t.leaf(x);
    t.backward(builder(t, xn));
    return t.grad(xn);
  };
  auto f1 = [&](Tape& t, int x) { return t.sum(t.matmul(x, t.leaf(a))); };
  auto f2 = [&](Tape& t, int x) { return t.sum(t.mul(x, x)); };
  auto fsum = [&](Tape& t, int x) { return t.add(f1(t, x), f2(t, x)); };

  const Tensor g1 = grad_of(f1), g2 = grad_of(f2), gs = grad_of(fsum);
  for (std::int64_t i = 0; i < gs.size(); ++i)
    CHECK(gs[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-15));
}

TEST_CASE("forward is bit-reproducible") {
  std::mt19937_64 rng(33);
  const Tensor x = randn({1, 16}, rng);
  const Tensor w = randn({16, 8}, rng);
  auto run = [&]() {
    Tape t;
    const int y = t.softmax(t.matmul(t.leaf(x), t.leaf(w)));
    return t.value(y).data();
  };
  const auto a = run(), b = run();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("shape errors name the offending primitive") {
  Tape tape;
  const int a = tape.leaf(Tensor({2, 3}));
  const int b = tape.leaf(Tensor({2, 3}));
  CHECK_THROWS_WITH_AS(tape.matmul(a, b),
                       doctest::Contains("matmul"), std::invalid_argument);
  const int c = tape.leaf(Tensor({4}));
  CHECK_THROWS_WITH_AS(tape.add(a, c), doctest::Contains("add"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(tape.mul(a, c), doctest::Contains("mul"),
                       std::invalid_argument);
  CHECK_THROWS_WITH_AS(tape.cross_entropy(a, {0}),
                       doctest::Contains("cross_entropy"),
                       std::invalid_argument);
}

TEST_CASE("backward twice on a consumed tape is rejected") {
  Tensor x = Tensor::scalar(2.0);
  x.requires_grad = true;
  Tape tape;
  const int xn = tape.leaf(x);
  const int y = tape.mul(xn, xn);
  tape.backward(y);
  CHECK_THROWS_AS(tape.backward(y), std::logic_error);
}

TEST_CASE("backward rejects a seed of the wrong shape") {
  Tensor x = Tensor({3}, {1.0, 2.0, 3.0});
  x.requires_grad = true;
  Tape tape;
  const int xn = tape.leaf(x);
  const int y = tape.relu(xn);
  CHECK_THROWS_AS(tape.backward(y, Tensor::scalar(1.0)), std::invalid_argument);
}

TEST_CASE("finite outputs for finite inputs across primitives") {
  std::mt19937_64 rng(55);
  for (int rep = 0; rep < 20; ++rep) {
    Tape t;
    const int x = t.leaf(randn({2, 4}, rng, 50.0));
    const int s = t.softmax(x);
    const int r = t.relu(x);
    const int l = t.cross_entropy(x, {1, 3});
    CHECK(t.value(s).all_finite());
    CHECK(t.value(r).all_finite());
    CHECK(t.value(l).all_finite());
  }
}

TEST_CASE("grad_check rejects non-positive step") {
  auto build = [](Tape& t, int x) { return t.sum(x); };
  CHECK_THROWS_AS(grad_check(build, Tensor({2}, {1.0, 2.0}), 0.0),
                  std::invalid_argument);
}
