#include <doctest.h>

#include <cmath>

#include "oracles.hpp"
#include "qnet.hpp"
#include "rng.hpp"

using rgia::DetRng;
using rgia::Vec;
using namespace rgia::num;

namespace {

// 0.5 (sum(out) - y)^2 as a parameter-loss builder over a fixed input.
LossBuilder sum_residual_loss(const MlpSpec& spec, const Vec& input, double y) {
  return [spec, input, y](Tape& tape, std::span<const Tape::Idx> params) {
    std::vector<Tape::Idx> in(input.size());
    for (size_t i = 0; i < input.size(); ++i) in[i] = tape.constant(input[i]);
    const auto out = mlp_graph(tape, spec, params, in);
    Tape::Idx s = out[0];
    for (size_t i = 1; i < out.size(); ++i) s = tape.add(s, out[i]);
    const auto d = tape.sub(s, tape.constant(y));
    return tape.mul(tape.constant(0.5), tape.mul(d, d));
  };
}

double sum_residual_eval(const MlpSpec& spec, const Vec& params, const Vec& input,
                         double y) {
  const Vec out = oracles::mlp_eval(spec, params, input);
  double s = 0.0;
  for (double v : out) s += v;
  return 0.5 * (s - y) * (s - y);
}

}  // namespace

TEST_CASE("zero-hidden forward is exactly the affine map") {
  MlpSpec spec;
  spec.input_dim = 3;
  spec.output_dim = 3;
  QNetwork net = QNetwork::zeros(spec);
  // identity weights, bias (1, 2, 3)
  for (int i = 0; i < 3; ++i) net.params[i * 3 + i] = 1.0;
  net.params[9] = 1.0;
  net.params[10] = 2.0;
  net.params[11] = 3.0;
  const Vec out = forward(net, {5.0, -1.0, 0.5});
  CHECK(out[0] == 6.0);
  CHECK(out[1] == 1.0);
  CHECK(out[2] == 3.5);
}

TEST_CASE("forward rejects wrong input length") {
  MlpSpec spec;
  spec.input_dim = 4;
  spec.output_dim = 2;
  const QNetwork net = QNetwork::init(spec, 1);
  CHECK_THROWS_AS(forward(net, {1.0, 2.0}), rgia::ShapeError);
}

TEST_CASE("seeded 4-8-2 forward equals the straight-line oracle") {
  MlpSpec spec;
  spec.input_dim = 4;
  spec.hidden_dims = {8};
  spec.output_dim = 2;
  const QNetwork net = QNetwork::init(spec, 7);
  const Vec input = {0.3, -1.2, 0.05, 2.0};
  const Vec got = forward(net, input);
  const Vec want = oracles::mlp_eval(spec, net.params, input);
  REQUIRE(got.size() == want.size());
  for (size_t i = 0; i < got.size(); ++i) CHECK(got[i] == want[i]);
}

TEST_CASE("taped forward matches plain forward bitwise") {
  DetRng rng(11);
  for (int trial = 0; trial < 20; ++trial) {
    const MlpSpec spec = oracles::random_spec(rng);
    const QNetwork net = QNetwork::init(spec, rng.next_u64());
    const Vec input = oracles::random_vec(rng, spec.input_dim);
    Tape tape;
    std::vector<Tape::Idx> p(net.params.size()), in(input.size());
    for (size_t i = 0; i < net.params.size(); ++i) p[i] = tape.constant(net.params[i]);
    for (size_t i = 0; i < input.size(); ++i) in[i] = tape.constant(input[i]);
    const auto out_nodes = mlp_graph(tape, spec, p, in);
    const Vec plain = forward(net, input);
    for (size_t i = 0; i < plain.size(); ++i) CHECK(tape.val(out_nodes[i]) == plain[i]);
  }
}

TEST_CASE("param_grad is zero at a stationary residual") {
  MlpSpec spec;
  spec.input_dim = 2;
  spec.output_dim = 1;
  QNetwork net = QNetwork::zeros(spec);
  net.params = {1.0, 2.0, 0.5};  // w = (1,2), b = 0.5
  const Vec input = {2.0, -1.0};
  const double y = 0.5;  // w.x + b = 0.5 exactly
  const Vec g = param_grad(net, sum_residual_loss(spec, input, y));
  for (double v : g) CHECK(v == 0.0);
}

TEST_CASE("linear-model gradient matches the closed form") {
  // loss = 0.5 (w.x + b - y)^2; dw = (w.x + b - y) x, db = residual.
  MlpSpec spec;
  spec.input_dim = 3;
  spec.output_dim = 1;
  QNetwork net = QNetwork::zeros(spec);
  net.params = {0.2, -0.4, 1.1, 0.3};
  const Vec x = {1.5, 0.5, -2.0};
  const double y = 0.7;
  const double resid = 0.2 * 1.5 - 0.4 * 0.5 + 1.1 * -2.0 + 0.3 - y;
  const Vec g = param_grad(net, sum_residual_loss(spec, x, y));
  CHECK(g[0] == doctest::Approx(resid * 1.5).epsilon(1e-14));
  CHECK(g[1] == doctest::Approx(resid * 0.5).epsilon(1e-14));
  CHECK(g[2] == doctest::Approx(resid * -2.0).epsilon(1e-14));
  CHECK(g[3] == doctest::Approx(resid).epsilon(1e-14));
}

TEST_CASE("param_grad matches central finite differences on random nets") {
  DetRng rng(101);
  double worst = 0.0;
  int done = 0;
  while (done < 100) {
    const MlpSpec spec = oracles::random_spec(rng);
    const QNetwork net = QNetwork::init(spec, rng.next_u64());
    const Vec input = oracles::random_vec(rng, spec.input_dim);
    // FD is only a valid oracle away from ReLU kinks; resample otherwise.
    if (oracles::min_kink_margin(spec, net.params, input) < 1e-3) continue;
    const double y = rng.normal();
    const Vec g = param_grad(net, sum_residual_loss(spec, input, y));
    const Vec fd = oracles::finite_diff(
        [&](const Vec& p) { return sum_residual_eval(spec, p, input, y); },
        net.params, 1e-5);
    worst = std::max(worst, oracles::max_rel_err(g, fd, 1e-3));
    ++done;
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("gradient is linear in the loss") {
  DetRng rng(77);
  const MlpSpec spec = oracles::random_spec(rng);
  const QNetwork net = QNetwork::init(spec, 5);
  const Vec x1 = oracles::random_vec(rng, spec.input_dim);
  const Vec x2 = oracles::random_vec(rng, spec.input_dim);
  const auto l1 = sum_residual_loss(spec, x1, 0.25);
  const auto l2 = sum_residual_loss(spec, x2, -1.0);
  const auto combined = [&](Tape& tape, std::span<const Tape::Idx> p) {
    return tape.add(l1(tape, p), l2(tape, p));
  };
  const Vec g1 = param_grad(net, l1);
  const Vec g2 = param_grad(net, l2);
  const Vec g = param_grad(net, combined);
  for (size_t i = 0; i < g.size(); ++i) {
    CHECK(g[i] == doctest::Approx(g1[i] + g2[i]).epsilon(1e-12));
  }
}

TEST_CASE("flatten and unflatten round-trip for assorted shapes") {
  DetRng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    const MlpSpec spec = oracles::random_spec(rng, 3);
    const QNetwork net = QNetwork::init(spec, rng.next_u64());
    const auto layers = unflatten(spec, net.params);
    const Vec back = flatten(spec, layers);
    CHECK(back == net.params);
  }
}

TEST_CASE("matching-loss input gradient: analytic equals finite differences") {
  DetRng rng(55);
  // Inner loss: 0.5 (sum(out(x)) - y)^2 with x as the candidate inputs.
  for (int trial = 0; trial < 20; ++trial) {
    const MlpSpec spec = oracles::random_spec(rng);
    const QNetwork net = QNetwork::init(spec, rng.next_u64());
    const double y = rng.normal();
    const InnerLossBuilder inner = [&, y](Tape& tape,
                                          std::span<const Tape::Idx> params,
                                          std::span<const Tape::Idx> xs) {
      const auto out = mlp_graph(tape, net.spec, params, xs);
      Tape::Idx s = out[0];
      for (size_t i = 1; i < out.size(); ++i) s = tape.add(s, out[i]);
      const auto d = tape.sub(s, tape.constant(y));
      return tape.mul(tape.constant(0.5), tape.mul(d, d));
    };

    const Vec x_true = oracles::random_vec(rng, spec.input_dim);
    const Vec target = param_grad(
        net, [&](Tape& tape, std::span<const Tape::Idx> p) {
          std::vector<Tape::Idx> xs(x_true.size());
          for (size_t i = 0; i < x_true.size(); ++i) xs[i] = tape.constant(x_true[i]);
          return inner(tape, p, xs);
        });

    const Vec x0 = oracles::random_vec(rng, spec.input_dim);
    const auto analytic =
        input_grad_of_matching_loss(net, x0, inner, target, GradMode::Analytic);
    const auto fd =
        input_grad_of_matching_loss(net, x0, inner, target, GradMode::FiniteDiff);
    CHECK(analytic.outer_loss == doctest::Approx(fd.outer_loss).epsilon(1e-12));
    CHECK(oracles::max_rel_err(analytic.input_grad, fd.input_grad, 1e-3) < 1e-4);

    // At the generating candidate the outer loss and gradient vanish.
    const auto at_truth =
        input_grad_of_matching_loss(net, x_true, inner, target, GradMode::Analytic);
    CHECK(at_truth.outer_loss == 0.0);
    for (double g : at_truth.input_grad) CHECK(std::abs(g) < 1e-8);
  }
}

TEST_CASE("matching loss rejects a target gradient of the wrong length") {
  MlpSpec spec;
  spec.input_dim = 2;
  spec.output_dim = 1;
  const QNetwork net = QNetwork::init(spec, 3);
  const InnerLossBuilder inner = [&](Tape& tape, std::span<const Tape::Idx> p,
                                     std::span<const Tape::Idx> xs) {
    const auto out = mlp_graph(tape, net.spec, p, xs);
    return tape.mul(out[0], out[0]);
  };
  CHECK_THROWS_AS(
      input_grad_of_matching_loss(net, {0.0, 0.0}, inner, Vec{1.0, 2.0}),
      rgia::ShapeError);
}

TEST_CASE("non-finite parameters raise a numeric error with a layer index") {
  MlpSpec spec;
  spec.input_dim = 2;
  spec.hidden_dims = {3};
  spec.output_dim = 1;
  QNetwork net = QNetwork::init(spec, 9);
  net.params[0] = std::numeric_limits<double>::infinity();
  try {
    param_grad(net, sum_residual_loss(spec, {1.0, 1.0}, 0.0));
    FAIL("expected NumericError");
  } catch (const rgia::NumericError& e) {
    CHECK(e.layer_index == 0);
  }
}
