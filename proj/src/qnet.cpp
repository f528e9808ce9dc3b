#include "qnet.hpp"

#include <cmath>

#include "rng.hpp"

namespace rgia::num {

void MlpSpec::validate() const {
  if (input_dim < 1 || output_dim < 1) {
    throw ShapeError("MlpSpec: dims must be >= 1");
  }
  for (int h : hidden_dims) {
    if (h < 1) throw ShapeError("MlpSpec: hidden dims must be >= 1");
  }
}

std::vector<std::pair<int, int>> MlpSpec::layer_shapes() const {
  std::vector<std::pair<int, int>> shapes;
  int in = input_dim;
  for (int h : hidden_dims) {
    shapes.emplace_back(in, h);
    in = h;
  }
  shapes.emplace_back(in, output_dim);
  return shapes;
}

int MlpSpec::param_count() const {
  int n = 0;
  for (auto [in, out] : layer_shapes()) n += in * out + out;
  return n;
}

uint64_t QNetwork::fingerprint() const {
  uint64_t h = fnv1a(&spec.input_dim, sizeof(int));
  h = fnv1a(&spec.output_dim, sizeof(int), h);
  for (int d : spec.hidden_dims) h = fnv1a(&d, sizeof(int), h);
  return hash_vec(params, h);
}

QNetwork QNetwork::init(const MlpSpec& spec, uint64_t seed) {
  spec.validate();
  QNetwork net{spec, Vec(static_cast<size_t>(spec.param_count()), 0.0)};
  DetRng rng(DetRng::mix(seed, 0x51ae7));
  size_t k = 0;
  for (auto [in, out] : spec.layer_shapes()) {
    const double scale = 1.0 / std::sqrt(static_cast<double>(in));
    for (int i = 0; i < in * out; ++i) net.params[k++] = rng.uniform(-scale, scale);
    for (int i = 0; i < out; ++i) net.params[k++] = 0.0;
  }
  return net;
}

QNetwork QNetwork::zeros(const MlpSpec& spec) {
  spec.validate();
  return QNetwork{spec, Vec(static_cast<size_t>(spec.param_count()), 0.0)};
}

std::vector<LayerParams> unflatten(const MlpSpec& spec, const Vec& params) {
  if (static_cast<int>(params.size()) != spec.param_count()) {
    throw ShapeError("unflatten: param length mismatch");
  }
  std::vector<LayerParams> layers;
  size_t k = 0;
  for (auto [in, out] : spec.layer_shapes()) {
    LayerParams lp;
    lp.weights = Matrix(out, in);
    for (int i = 0; i < out * in; ++i) lp.weights.data[i] = params[k++];
    lp.bias.assign(params.begin() + k, params.begin() + k + out);
    k += out;
    layers.push_back(std::move(lp));
  }
  return layers;
}

Vec flatten(const MlpSpec& spec, const std::vector<LayerParams>& layers) {
  Vec params;
  params.reserve(spec.param_count());
  for (const auto& lp : layers) {
    params.insert(params.end(), lp.weights.data.begin(), lp.weights.data.end());
    params.insert(params.end(), lp.bias.begin(), lp.bias.end());
  }
  if (static_cast<int>(params.size()) != spec.param_count()) {
    throw ShapeError("flatten: layer shapes do not match spec");
  }
  return params;
}

Vec forward(const QNetwork& net, const Vec& input) {
  if (static_cast<int>(input.size()) != net.spec.input_dim) {
    throw ShapeError("forward: input length != input_dim");
  }
  const auto shapes = net.spec.layer_shapes();
  Vec h = input;
  size_t k = 0;
  for (size_t l = 0; l < shapes.size(); ++l) {
    const auto [in, out] = shapes[l];
    Vec next(out, 0.0);
    for (int o = 0; o < out; ++o) {
      double acc = 0.0;
      for (int i = 0; i < in; ++i) acc += net.params[k + o * in + i] * h[i];
      next[o] = acc + net.params[k + static_cast<size_t>(in) * out + o];
    }
    k += static_cast<size_t>(in) * out + out;
    const bool last = l + 1 == shapes.size();
    if (!last) {
      for (double& x : next) {
        x = net.spec.activation == Activation::Tanh ? std::tanh(x)
                                                    : (x > 0.0 ? x : 0.0);
      }
    }
    h = std::move(next);
  }
  return h;
}

std::vector<Tape::Idx> mlp_graph(Tape& tape, const MlpSpec& spec,
                                 std::span<const Tape::Idx> params,
                                 std::span<const Tape::Idx> input) {
  if (static_cast<int>(params.size()) != spec.param_count()) {
    throw ShapeError("mlp_graph: param node count mismatch");
  }
  if (static_cast<int>(input.size()) != spec.input_dim) {
    throw ShapeError("mlp_graph: input node count mismatch");
  }
  const auto shapes = spec.layer_shapes();
  std::vector<Tape::Idx> h(input.begin(), input.end());
  size_t k = 0;
  for (size_t l = 0; l < shapes.size(); ++l) {
    const auto [in, out] = shapes[l];
    std::vector<Tape::Idx> next(out);
    for (int o = 0; o < out; ++o) {
      Tape::Idx acc = tape.mul(params[k + static_cast<size_t>(o) * in], h[0]);
      for (int i = 1; i < in; ++i) {
        acc = tape.add(acc, tape.mul(params[k + static_cast<size_t>(o) * in + i], h[i]));
      }
      next[o] = tape.add(acc, params[k + static_cast<size_t>(in) * out + o]);
    }
    k += static_cast<size_t>(in) * out + out;
    // Check the affine outputs: a saturating activation would mask an
    // overflow that happened in this layer.
    for (auto n : next) {
      if (!std::isfinite(tape.val(n))) {
        throw NumericError("mlp_graph: non-finite pre-activation",
                           static_cast<int>(l));
      }
    }
    const bool last = l + 1 == shapes.size();
    if (!last) {
      for (auto& n : next) {
        n = spec.activation == Activation::Tanh ? tape.tanh_of(n) : tape.relu(n);
      }
    }
    h = std::move(next);
  }
  return h;
}

Vec param_grad(const QNetwork& net, const LossBuilder& loss) {
  Tape tape;
  tape.reserve(4096);
  std::vector<Tape::Idx> p(net.params.size());
  for (size_t i = 0; i < net.params.size(); ++i) p[i] = tape.constant(net.params[i]);
  const Tape::Idx l = loss(tape, p);
  if (!std::isfinite(tape.val(l))) {
    throw NumericError("param_grad: non-finite loss");
  }
  Vec g = tape.gradient_values(l, p);
  require_finite(g, "param_grad result");
  return g;
}

MatchingLossResult input_grad_of_matching_loss(const QNetwork& net,
                                               const Vec& inputs,
                                               const InnerLossBuilder& inner,
                                               const Vec& target_grad,
                                               GradMode mode,
                                               double fd_epsilon) {
  if (static_cast<int>(target_grad.size()) != net.param_count()) {
    throw ShapeError("matching loss: target gradient length != param_count");
  }

  auto outer_at = [&](const Vec& x, Tape& tape, std::vector<Tape::Idx>* x_nodes_out) {
    tape.clear();
    std::vector<Tape::Idx> p(net.params.size());
    for (size_t i = 0; i < net.params.size(); ++i) p[i] = tape.constant(net.params[i]);
    std::vector<Tape::Idx> xs(x.size());
    for (size_t i = 0; i < x.size(); ++i) xs[i] = tape.constant(x[i]);
    const Tape::Idx l = inner(tape, p, xs);
    auto g = tape.gradient(l, p);
    Tape::Idx outer = tape.constant(0.0);
    for (size_t i = 0; i < g.size(); ++i) {
      const Tape::Idx d = tape.sub(g[i], tape.constant(target_grad[i]));
      outer = tape.add(outer, tape.mul(d, d));
    }
    if (x_nodes_out) *x_nodes_out = std::move(xs);
    return outer;
  };

  MatchingLossResult res;
  Tape tape;
  if (mode == GradMode::Analytic) {
    std::vector<Tape::Idx> xs;
    const Tape::Idx outer = outer_at(inputs, tape, &xs);
    res.outer_loss = tape.val(outer);
    res.input_grad = tape.gradient_values(outer, xs);
  } else {
    std::vector<Tape::Idx> xs;
    const Tape::Idx outer = outer_at(inputs, tape, &xs);
    res.outer_loss = tape.val(outer);
    res.input_grad.resize(inputs.size());
    Vec x = inputs;
    for (size_t j = 0; j < inputs.size(); ++j) {
      const double x0 = x[j];
      x[j] = x0 + fd_epsilon;
      const double fp = tape.val(outer_at(x, tape, nullptr));
      x[j] = x0 - fd_epsilon;
      const double fm = tape.val(outer_at(x, tape, nullptr));
      x[j] = x0;
      res.input_grad[j] = (fp - fm) / (2.0 * fd_epsilon);
    }
  }
  if (!std::isfinite(res.outer_loss)) {
    throw NumericError("matching loss: non-finite outer loss");
  }
  require_finite(res.input_grad, "matching loss input gradient");
  return res;
}

}  // namespace rgia::num
