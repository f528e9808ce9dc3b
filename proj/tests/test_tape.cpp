#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "tape.hpp"

using rgia::num::Tape;

TEST_CASE("tape evaluates eagerly") {
  Tape t;
  const auto x = t.constant(2.0);
  const auto y = t.constant(3.0);
  CHECK(t.val(t.add(x, y)) == 5.0);
  CHECK(t.val(t.sub(x, y)) == -1.0);
  CHECK(t.val(t.mul(x, y)) == 6.0);
  CHECK(t.val(t.neg(x)) == -2.0);
  CHECK(t.val(t.tanh_of(x)) == doctest::Approx(std::tanh(2.0)));
  CHECK(t.val(t.relu(t.constant(-1.5))) == 0.0);
  CHECK(t.val(t.relu(x)) == 2.0);
  CHECK(t.val(t.max_of(x, y)) == 3.0);
}

TEST_CASE("first-order gradients match hand derivatives") {
  Tape t;
  const auto x = t.constant(0.7);
  const auto y = t.constant(-1.3);
  // f = x*y + tanh(x)
  const auto f = t.add(t.mul(x, y), t.tanh_of(x));
  const Tape::Idx wrt[] = {x, y};
  const auto g = t.gradient_values(f, wrt);
  const double th = std::tanh(0.7);
  CHECK(g[0] == doctest::Approx(-1.3 + (1.0 - th * th)).epsilon(1e-12));
  CHECK(g[1] == doctest::Approx(0.7).epsilon(1e-12));
}

TEST_CASE("second-order derivative through taped backward") {
  // f = x^3: f' = 3x^2, f'' = 6x.
  Tape t;
  const auto x = t.constant(1.7);
  const auto f = t.mul(x, t.mul(x, x));
  const Tape::Idx wrt[] = {x};
  const auto g = t.gradient(f, wrt);
  CHECK(t.val(g[0]) == doctest::Approx(3.0 * 1.7 * 1.7).epsilon(1e-12));
  const auto g2 = t.gradient_values(g[0], wrt);
  CHECK(g2[0] == doctest::Approx(6.0 * 1.7).epsilon(1e-12));
}

TEST_CASE("mixed second order on a two-variable expression") {
  // f = tanh(x*y); d2f/dydx checked against nested finite differences.
  auto eval = [](const rgia::Vec& v) { return std::tanh(v[0] * v[1]); };
  Tape t;
  const auto x = t.constant(0.4);
  const auto y = t.constant(-0.9);
  const auto f = t.tanh_of(t.mul(x, y));
  const Tape::Idx wrt_x[] = {x};
  const auto gx = t.gradient(f, wrt_x);
  const Tape::Idx wrt_y[] = {y};
  const auto gxy = t.gradient_values(gx[0], wrt_y);

  const double eps = 1e-5;
  auto dfdx = [&](const rgia::Vec& v) {
    rgia::Vec hi = v, lo = v;
    hi[0] += eps;
    lo[0] -= eps;
    return (eval(hi) - eval(lo)) / (2 * eps);
  };
  rgia::Vec p{0.4, -0.9};
  rgia::Vec hi = p, lo = p;
  hi[1] += eps;
  lo[1] -= eps;
  const double fd = (dfdx(hi) - dfdx(lo)) / (2 * eps);
  CHECK(gxy[0] == doctest::Approx(fd).epsilon(1e-5));
}

TEST_CASE("max gradient follows the winning branch, ties to the first") {
  Tape t;
  SUBCASE("clear winner") {
    const auto a = t.constant(1.0);
    const auto b = t.constant(2.0);
    const auto m = t.max_of(a, b);
    const Tape::Idx wrt[] = {a, b};
    const auto g = t.gradient_values(m, wrt);
    CHECK(g[0] == 0.0);
    CHECK(g[1] == 1.0);
  }
  SUBCASE("tie goes to the lower index") {
    const auto a = t.constant(2.0);
    const auto b = t.constant(2.0);
    const auto m = t.max_of(a, b);
    const Tape::Idx wrt[] = {a, b};
    const auto g = t.gradient_values(m, wrt);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 0.0);
  }
  SUBCASE("fold ties to the lowest index") {
    const Tape::Idx xs[] = {t.constant(3.0), t.constant(1.0), t.constant(3.0)};
    const auto m = t.max_fold(xs);
    const auto g = t.gradient_values(m, xs);
    CHECK(g[0] == 1.0);
    CHECK(g[1] == 0.0);
    CHECK(g[2] == 0.0);
  }
}

TEST_CASE("relu subgradient is zero at the kink and off branch") {
  Tape t;
  const auto a = t.constant(0.0);
  const auto r = t.relu(a);
  const Tape::Idx wrt[] = {a};
  CHECK(t.gradient_values(r, wrt)[0] == 0.0);

  const auto b = t.constant(-0.5);
  const auto r2 = t.relu(b);
  const Tape::Idx wrt2[] = {b};
  CHECK(t.gradient_values(r2, wrt2)[0] == 0.0);
}

TEST_CASE("gradient of an unrelated node is a zero constant") {
  Tape t;
  const auto x = t.constant(1.0);
  const auto z = t.constant(4.0);
  const auto f = t.mul(x, x);
  const Tape::Idx wrt[] = {z};
  CHECK(t.gradient_values(f, wrt)[0] == 0.0);
}

TEST_CASE("random expressions match finite differences") {
  rgia::DetRng rng(42);
  for (int trial = 0; trial < 50; ++trial) {
    const rgia::Vec x0 = oracles::random_vec(rng, 4);
    auto eval = [](const rgia::Vec& v) {
      const double a = std::tanh(v[0] * v[1] + v[2]);
      const double b = std::max(v[2] * v[3], v[0] - v[3]);
      const double r = v[1] > 0.0 ? v[1] : 0.0;
      return a * b + r * r;
    };
    Tape t;
    std::vector<Tape::Idx> xs(4);
    for (int i = 0; i < 4; ++i) xs[i] = t.constant(x0[i]);
    const auto a = t.tanh_of(t.add(t.mul(xs[0], xs[1]), xs[2]));
    const auto b = t.max_of(t.mul(xs[2], xs[3]), t.sub(xs[0], xs[3]));
    const auto r = t.relu(xs[1]);
    const auto f = t.add(t.mul(a, b), t.mul(r, r));
    CHECK(t.val(f) == doctest::Approx(eval(x0)).epsilon(1e-12));
    const auto g = t.gradient_values(f, xs);
    const auto fd = oracles::finite_diff(eval, x0, 1e-6);
    CHECK(oracles::max_rel_err(g, fd, 1e-4) < 1e-5);
  }
}
