#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace rgia::num {

// Scalar reverse-mode tape. Nodes evaluate eagerly at creation, so node
// indices are already a topological order. gradient() builds the adjoints
// as fresh nodes on the same tape rather than accumulating plain doubles;
// a gradient is therefore an ordinary differentiable subgraph and a second
// gradient() over it yields exact mixed second-order derivatives.
class Tape {
 public:
  using Idx = int32_t;

  Idx constant(double v);
  Idx add(Idx a, Idx b);
  Idx sub(Idx a, Idx b);
  Idx mul(Idx a, Idx b);
  Idx neg(Idx a);
  Idx tanh_of(Idx a);
  Idx relu(Idx a);
  // Binary max; gradient flows through the larger branch, ties to `a`.
  Idx max_of(Idx a, Idx b);
  // Left fold of max_of, so ties resolve to the lowest index.
  Idx max_fold(std::span<const Idx> xs);

  double val(Idx i) const { return nodes_[i].val; }
  size_t size() const { return nodes_.size(); }
  void clear() { nodes_.clear(); }
  void reserve(size_t n) { nodes_.reserve(n); }

  // d(root)/d(wrt[k]) for every requested node, as node indices on this
  // tape. Nodes the root does not depend on get a fresh zero constant.
  std::vector<Idx> gradient(Idx root, std::span<const Idx> wrt);

  // Convenience: numeric values of a gradient in one call.
  std::vector<double> gradient_values(Idx root, std::span<const Idx> wrt);

 private:
  enum class Op : uint8_t { Const, Add, Sub, Mul, Neg, Tanh, Relu, Max };

  struct Node {
    Op op;
    Idx a = -1;
    Idx b = -1;
    double val = 0.0;
  };

  Idx push(Op op, Idx a, Idx b, double v);

  std::vector<Node> nodes_;
};

}  // namespace rgia::num
