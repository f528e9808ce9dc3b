#pragma once

#include <functional>
#include <span>
#include <utility>
#include <vector>

#include "support.hpp"
#include "tape.hpp"

namespace rgia::num {

enum class Activation { Tanh, Relu };

struct MlpSpec {
  int input_dim = 1;
  std::vector<int> hidden_dims;
  int output_dim = 1;
  Activation activation = Activation::Tanh;

  void validate() const;
  // (in, out) per affine layer, input through output.
  std::vector<std::pair<int, int>> layer_shapes() const;
  int param_count() const;

  bool operator==(const MlpSpec&) const = default;
};

struct LayerParams {
  Matrix weights;  // out x in
  Vec bias;        // out
};

// Feed-forward Q-network. Parameters live in one flat vector, layer-major,
// weights (row-major, out x in) then bias per layer. Hidden layers apply the
// activation; the output layer is linear.
struct QNetwork {
  MlpSpec spec;
  Vec params;

  int param_count() const { return spec.param_count(); }
  uint64_t fingerprint() const;

  static QNetwork init(const MlpSpec& spec, uint64_t seed);
  static QNetwork zeros(const MlpSpec& spec);
};

std::vector<LayerParams> unflatten(const MlpSpec& spec, const Vec& params);
Vec flatten(const MlpSpec& spec, const std::vector<LayerParams>& layers);

// Plain forward pass; same accumulation order as the taped graph, so both
// produce bit-identical outputs.
Vec forward(const QNetwork& net, const Vec& input);

// Builds the network as a tape subgraph. `params` must hold param_count()
// leaf nodes, `input` input_dim nodes. Throws NumericError carrying the
// offending layer index if a layer output goes non-finite.
std::vector<Tape::Idx> mlp_graph(Tape& tape, const MlpSpec& spec,
                                 std::span<const Tape::Idx> params,
                                 std::span<const Tape::Idx> input);

// A scalar loss built over parameter leaves. Receives the tape and the
// parameter leaf nodes; returns the loss node.
using LossBuilder =
    std::function<Tape::Idx(Tape&, std::span<const Tape::Idx>)>;

// Gradient of a scalar loss with respect to the flattened parameters.
Vec param_grad(const QNetwork& net, const LossBuilder& loss);

// Inner loss over (params, inputs) used for gradient matching; returns the
// loss node. Input leaves carry the candidate variables.
using InnerLossBuilder = std::function<Tape::Idx(
    Tape&, std::span<const Tape::Idx> params, std::span<const Tape::Idx> inputs)>;

enum class GradMode { Analytic, FiniteDiff };

struct MatchingLossResult {
  Vec input_grad;
  double outer_loss = 0.0;
};

// Gradient of  || grad_params(inner(params, x)) - target ||^2  with respect
// to x. Analytic mode differentiates the taped backward pass a second time;
// FiniteDiff re-evaluates the outer scalar with central differences.
MatchingLossResult input_grad_of_matching_loss(const QNetwork& net,
                                               const Vec& inputs,
                                               const InnerLossBuilder& inner,
                                               const Vec& target_grad,
                                               GradMode mode = GradMode::Analytic,
                                               double fd_epsilon = 1e-4);

}  // namespace rgia::num
