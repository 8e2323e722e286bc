#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <limits>
#include <vector>

#include "meco/dense_array.hpp"
#include "meco/numerics.hpp"
#include "meco/rng.hpp"
#include "meco/tape.hpp"
#include "support.hpp"

using namespace meco;
using meco::testing::fd_gradient;
using meco::testing::max_grad_rel_err;

namespace {
constexpr double kInf = std::numeric_limits<double>::infinity();

// index of a pool node with the same shape as `like`
std::size_t pick_same_shape(Tape<double>& t, const std::vector<NodeId>& pool, NodeId like,
                            RngStream& rng) {
  std::vector<std::size_t> same;
  for (std::size_t i = 0; i < pool.size(); ++i)
    if (t.rows(pool[i]) == t.rows(like) && t.cols(pool[i]) == t.cols(like)) same.push_back(i);
  return same[rng.uniform_index(same.size())];
}
}  // namespace

TEST_CASE("logaddexp examples") {
  CHECK(logaddexp(0.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(logaddexp(1000.0, 1000.0) == doctest::Approx(1000.0 + std::log(2.0)).epsilon(1e-12));
  CHECK(logaddexp(-kInf, 3.2) == 3.2);
  CHECK(logaddexp(3.2, -kInf) == 3.2);
  CHECK(logaddexp(-kInf, -kInf) == -kInf);
  CHECK(logaddexp(700.0, -700.0) == doctest::Approx(700.0));
}

TEST_CASE("logaddexp max/log1p identity") {
  RngStream rng(7);
  for (int i = 0; i < 300; ++i) {
    double a = (rng.uniform() - 0.5) * 1400.0;
    double b = (rng.uniform() - 0.5) * 1400.0;
    double ref = std::max(a, b) + std::log1p(std::exp(-std::abs(a - b)));
    CHECK(logaddexp(a, b) == doctest::Approx(ref).epsilon(1e-14));
  }
}

TEST_CASE("logsumexp and logmeanexp") {
  std::vector<double> xs = {0.0, 0.0, 0.0, 0.0};
  CHECK(logsumexp(xs) == doctest::Approx(std::log(4.0)).epsilon(1e-14));
  CHECK(logmeanexp(xs) == doctest::Approx(0.0));
  std::vector<double> big = {900.0, 901.0};
  CHECK(logsumexp(big) == doctest::Approx(901.0 + std::log1p(std::exp(-1.0))).epsilon(1e-14));
}

TEST_CASE("RngStream determinism and stream separation") {
  RngStream a(42, 3), b(42, 3), c(42, 4);
  std::vector<std::uint64_t> sa, sb, sc;
  for (int i = 0; i < 64; ++i) {
    sa.push_back(a.next_u64());
    sb.push_back(b.next_u64());
    sc.push_back(c.next_u64());
  }
  CHECK(sa == sb);
  CHECK(sa != sc);

  // normal() draws are byte-identical under the same stream
  RngStream n1(9, 0), n2(9, 0);
  for (int i = 0; i < 100; ++i) {
    double x = n1.normal(), y = n2.normal();
    CHECK(std::memcmp(&x, &y, sizeof x) == 0);
  }
}

TEST_CASE("RngStream normal moments") {
  RngStream rng(1234);
  double s = 0.0, s2 = 0.0;
  const int n = 200000;
  for (int i = 0; i < n; ++i) {
    double x = rng.normal();
    s += x;
    s2 += x * x;
  }
  double mean = s / n, var = s2 / n - mean * mean;
  CHECK(std::abs(mean) < 0.01);
  CHECK(var == doctest::Approx(1.0).epsilon(0.02));
}

TEST_CASE("DenseArray shape contract") {
  CHECK_THROWS_AS(DenseArray({2, 3}, std::vector<double>(5)), contract_error);
  DenseArray a({2, 3});
  CHECK(a.size() == 6);
  CHECK(a.rows() == 2);
  CHECK(a.cols() == 3);
}

TEST_CASE("tape: f(x)=x^2 at x=3") {
  Tape<double> t;
  NodeId x = t.input(1, 1);
  NodeId y = t.mul(x, x);
  t.value(x)[0] = 3.0;
  t.forward();
  CHECK(t.value(y)[0] == doctest::Approx(9.0));
  auto g = input_grad(t, y, x);
  CHECK(g[0] == doctest::Approx(6.0).epsilon(1e-14));
}

TEST_CASE("tape: f(x)=log(exp(x)) at 1.7") {
  Tape<double> t;
  NodeId x = t.input(1, 1);
  NodeId y = t.log(t.exp(x));
  t.value(x)[0] = 1.7;
  t.forward();
  CHECK(t.value(y)[0] == doctest::Approx(1.7).epsilon(1e-14));
  CHECK(input_grad(t, y, x)[0] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tape: non-scalar backward is a contract violation") {
  Tape<double> t;
  NodeId x = t.input(2, 2);
  NodeId y = t.exp(x);
  t.forward();
  CHECK_THROWS_AS(t.backward(y), contract_error);
}

TEST_CASE("tape: unreachable wrt node gets zero gradient") {
  Tape<double> t;
  NodeId x = t.input(1, 1);
  NodeId z = t.input(1, 1);  // never feeds the output
  NodeId y = t.mul(x, x);
  t.value(x)[0] = 2.0;
  t.value(z)[0] = 5.0;
  t.forward();
  NodeId wrt[2] = {x, z};
  auto g = grad(t, y, wrt);
  CHECK(g.at(x)[0] == doctest::Approx(4.0));
  CHECK(g.at(z)[0] == 0.0);
}

TEST_CASE("tape: input_grad requires a registered input") {
  Tape<double> t;
  NodeId c = t.constant(1, 1);
  NodeId y = t.exp(c);
  t.value(c)[0] = 0.3;
  t.forward();
  CHECK_THROWS_AS(input_grad(t, y, c), contract_error);
}

TEST_CASE("tape values and structure survive backward (reusable)") {
  Tape<double> t;
  NodeId x = t.input(1, 1);
  NodeId y = t.mul(t.exp(x), x);
  t.value(x)[0] = 0.8;
  t.forward();
  double before = t.value(y)[0];
  t.backward(y);
  double g1 = t.adjoint(x)[0];
  t.backward(y);  // adjoints re-zeroed per call, same answer
  CHECK(t.adjoint(x)[0] == g1);
  CHECK(t.value(y)[0] == before);
}

namespace {

// 2 -> 8 -> 8 -> 1 MLP built directly on a tape, weights as inputs.
struct TapeMlp {
  Tape<double> tape;
  NodeId x, w1, b1, w2, b2, w3, b3, out;
  TapeMlp() {
    x = tape.input(1, 2);
    w1 = tape.input(2, 8);
    b1 = tape.input(1, 8);
    w2 = tape.input(8, 8);
    b2 = tape.input(1, 8);
    w3 = tape.input(8, 1);
    b3 = tape.input(1, 1);
    NodeId h1 = tape.tanh(tape.add(tape.matmul(x, w1), b1));
    NodeId h2 = tape.tanh(tape.add(tape.matmul(h1, w2), b2));
    out = tape.add(tape.matmul(h2, w3), b3);
  }
  std::vector<NodeId> params() const { return {w1, b1, w2, b2, w3, b3}; }
};

}  // namespace

TEST_CASE("tape: 3-layer MLP gradients match central finite differences") {
  TapeMlp mlp;
  RngStream rng(2024);
  auto randomize = [&](Tape<double>& t, NodeId n) {
    for (auto& v : t.value(n)) v = 0.8 * (2.0 * rng.uniform() - 1.0);
  };
  for (int trial = 0; trial < 5; ++trial) {
    randomize(mlp.tape, mlp.x);
    for (NodeId p : mlp.params()) randomize(mlp.tape, p);
    mlp.tape.forward();

    std::vector<NodeId> wrt = mlp.params();
    wrt.push_back(mlp.x);
    auto grads = grad(mlp.tape, mlp.out, wrt);

    for (NodeId p : wrt) {
      std::vector<double> base(mlp.tape.value(p).begin(), mlp.tape.value(p).end());
      auto f = [&](std::span<const double> v) {
        mlp.tape.set_value(p, v);
        mlp.tape.forward();
        return mlp.tape.value(mlp.out)[0];
      };
      auto fd = fd_gradient(f, base);
      mlp.tape.set_value(p, std::span<const double>(base));
      mlp.tape.forward();
      CHECK(max_grad_rel_err(grads.at(p).flat(), fd) < 1e-5);
    }
  }
}

TEST_CASE("input_grad: quadratic energy") {
  Tape<double> t;
  NodeId x = t.input(1, 2);
  NodeId c = t.constant(1, 2);
  NodeId y = t.sum(t.mul(c, t.mul(x, x)));
  t.value(c)[0] = -0.5;
  t.value(c)[1] = -0.5;
  t.value(x)[0] = 1.0;
  t.value(x)[1] = 2.0;
  t.forward();
  auto g = input_grad(t, y, x);
  CHECK(g[0] == doctest::Approx(-1.0).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(-2.0).epsilon(1e-12));
}

TEST_CASE("Taylor2 sweep: second derivative of -x^2/2 is -1") {
  Tape<Taylor2> t;
  NodeId x = t.input(1, 1);
  NodeId c = t.constant(1, 1);
  NodeId y = t.sum(t.mul(c, t.mul(x, x)));
  t.value(y);  // silence unused warnings in release
  t.value(c)[0] = Taylor2(-0.5);
  t.value(x)[0] = Taylor2(0.37, 1.0, 0.0);  // probe direction
  t.forward();
  Taylor2 f = t.value(y)[0];
  CHECK(f.v0 == doctest::Approx(-0.5 * 0.37 * 0.37));
  CHECK(f.v1 == doctest::Approx(-0.37));       // first derivative
  CHECK(2.0 * f.v2 == doctest::Approx(-1.0));  // second derivative
}

TEST_CASE("Taylor2 arithmetic against finite differences") {
  auto probe = [](auto&& fn, double x0) {
    Taylor2 y = fn(Taylor2(x0, 1.0, 0.0));
    const double h = 1e-4;
    double f0 = fn(Taylor2(x0)).v0;
    double fp = fn(Taylor2(x0 + h)).v0;
    double fm = fn(Taylor2(x0 - h)).v0;
    CHECK(y.v1 == doctest::Approx((fp - fm) / (2 * h)).epsilon(1e-6));
    CHECK(2.0 * y.v2 == doctest::Approx((fp - 2 * f0 + fm) / (h * h)).epsilon(1e-4));
  };
  for (double x0 : {-1.3, -0.2, 0.5, 1.7}) {
    probe([](Taylor2 v) { return meco::exp(v); }, x0);
    probe([](Taylor2 v) { return meco::tanh(v); }, x0);
    probe([](Taylor2 v) { return meco::softplus(v); }, x0);
    probe([](Taylor2 v) { return meco::swish(v); }, x0);
    probe([](Taylor2 v) { return meco::sigmoid(v); }, x0);
    probe([](Taylor2 v) { return meco::log(meco::exp(v) + Taylor2(1.5)); }, x0);
    probe([](Taylor2 v) { return v * v * v - Taylor2(2.0) * v; }, x0);
    probe([](Taylor2 v) { return Taylor2(1.0) / (v + Taylor2(3.0)); }, x0);
  }
}

TEST_CASE("property: random tapes match finite differences (>=100)") {
  RngStream rng(555);
  int checked = 0;
  for (int trial = 0; trial < 60; ++trial) {
    Tape<double> t;
    std::vector<NodeId> pool;
    std::vector<NodeId> inputs;
    auto new_input = [&](std::size_t r, std::size_t c) {
      NodeId n = t.input(r, c);
      for (auto& v : t.value(n)) v = 0.25 + rng.uniform();  // positive, log-safe
      inputs.push_back(n);
      pool.push_back(n);
      return n;
    };
    std::size_t cols = 1 + rng.uniform_index(3);
    new_input(1, cols);
    new_input(1, cols);
    int ops = 3 + static_cast<int>(rng.uniform_index(4));
    for (int k = 0; k < ops; ++k) {
      NodeId a = pool[rng.uniform_index(pool.size())];
      switch (rng.uniform_index(7)) {
        case 0: pool.push_back(t.add(a, pool[pick_same_shape(t, pool, a, rng)])); break;
        case 1: pool.push_back(t.mul(a, pool[pick_same_shape(t, pool, a, rng)])); break;
        case 2: pool.push_back(t.tanh(a)); break;
        case 3: pool.push_back(t.softplus(a)); break;
        case 4: pool.push_back(t.swish(a)); break;
        case 5: pool.push_back(t.log(t.exp(a))); break;
        default: {
          NodeId b = new_input(t.cols(a), 1 + rng.uniform_index(3));
          pool.push_back(t.matmul(a, b));
          break;
        }
      }
    }
    NodeId out = t.sum(pool.back());
    t.forward();
    auto grads = grad(t, out, inputs);
    for (NodeId p : inputs) {
      std::vector<double> base(t.value(p).begin(), t.value(p).end());
      auto f = [&](std::span<const double> v) {
        t.set_value(p, v);
        t.forward();
        return t.value(out)[0];
      };
      auto fd = fd_gradient(f, base);
      t.set_value(p, std::span<const double>(base));
      t.forward();
      CHECK(max_grad_rel_err(grads.at(p).flat(), fd) < 1e-5);
      ++checked;
    }
  }
  CHECK(checked >= 100);
}
