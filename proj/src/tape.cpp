#include "tape.hpp"

#include <cmath>

namespace rgia::num {

Tape::Idx Tape::push(Op op, Idx a, Idx b, double v) {
  nodes_.push_back(Node{op, a, b, v});
  return static_cast<Idx>(nodes_.size() - 1);
}

Tape::Idx Tape::constant(double v) { return push(Op::Const, -1, -1, v); }

Tape::Idx Tape::add(Idx a, Idx b) {
  // Folding x+0 keeps one-hot-heavy graphs small; values are unchanged.
  if (nodes_[a].op == Op::Const && nodes_[a].val == 0.0) return b;
  if (nodes_[b].op == Op::Const && nodes_[b].val == 0.0) return a;
  return push(Op::Add, a, b, nodes_[a].val + nodes_[b].val);
}

Tape::Idx Tape::sub(Idx a, Idx b) {
  if (nodes_[b].op == Op::Const && nodes_[b].val == 0.0) return a;
  return push(Op::Sub, a, b, nodes_[a].val - nodes_[b].val);
}

Tape::Idx Tape::mul(Idx a, Idx b) {
  // Fold x*1 (the seed adjoint) and x*0 (one-hot encodings); keeps
  // second-backward tapes small while leaving values bit-identical.
  if (nodes_[a].op == Op::Const && nodes_[a].val == 1.0) return b;
  if (nodes_[b].op == Op::Const && nodes_[b].val == 1.0) return a;
  if (nodes_[a].op == Op::Const && nodes_[a].val == 0.0) return a;
  if (nodes_[b].op == Op::Const && nodes_[b].val == 0.0) return b;
  return push(Op::Mul, a, b, nodes_[a].val * nodes_[b].val);
}

Tape::Idx Tape::neg(Idx a) { return push(Op::Neg, a, -1, -nodes_[a].val); }

Tape::Idx Tape::tanh_of(Idx a) {
  return push(Op::Tanh, a, -1, std::tanh(nodes_[a].val));
}

Tape::Idx Tape::relu(Idx a) {
  const double v = nodes_[a].val;
  return push(Op::Relu, a, -1, v > 0.0 ? v : 0.0);
}

Tape::Idx Tape::max_of(Idx a, Idx b) {
  return push(Op::Max, a, b,
              nodes_[a].val >= nodes_[b].val ? nodes_[a].val : nodes_[b].val);
}

Tape::Idx Tape::max_fold(std::span<const Idx> xs) {
  Idx m = xs[0];
  for (size_t i = 1; i < xs.size(); ++i) m = max_of(m, xs[i]);
  return m;
}

std::vector<Tape::Idx> Tape::gradient(Idx root, std::span<const Idx> wrt) {
  // Mark the subgraph the root depends on; children always precede parents.
  std::vector<char> needed(static_cast<size_t>(root) + 1, 0);
  needed[root] = 1;
  for (Idx i = root; i >= 0; --i) {
    if (!needed[i]) continue;
    const Node& n = nodes_[i];
    if (n.a >= 0) needed[n.a] = 1;
    if (n.b >= 0) needed[n.b] = 1;
  }

  std::vector<Idx> adj(static_cast<size_t>(root) + 1, -1);
  adj[root] = constant(1.0);

  auto accumulate = [&](Idx node, Idx g) {
    adj[node] = adj[node] < 0 ? g : add(adj[node], g);
  };

  for (Idx i = root; i >= 0; --i) {
    if (!needed[i] || adj[i] < 0) continue;
    const Node n = nodes_[i];  // copy: nodes_ may reallocate below
    const Idx g = adj[i];
    switch (n.op) {
      case Op::Const:
        break;
      case Op::Add:
        accumulate(n.a, g);
        accumulate(n.b, g);
        break;
      case Op::Sub:
        accumulate(n.a, g);
        accumulate(n.b, neg(g));
        break;
      case Op::Mul:
        accumulate(n.a, mul(g, n.b));
        accumulate(n.b, mul(g, n.a));
        break;
      case Op::Neg:
        accumulate(n.a, neg(g));
        break;
      case Op::Tanh: {
        // d tanh(x)/dx = 1 - tanh(x)^2, expressed through the output node
        // so the factor stays differentiable.
        const Idx one = constant(1.0);
        const Idx d = sub(one, mul(i, i));
        accumulate(n.a, mul(g, d));
        break;
      }
      case Op::Relu:
        // Subgradient 0 at the kink; the active-branch selector is constant
        // under further differentiation (second derivative is 0 a.e.).
        if (nodes_[n.a].val > 0.0) accumulate(n.a, g);
        break;
      case Op::Max:
        if (nodes_[n.a].val >= nodes_[n.b].val) {
          accumulate(n.a, g);
        } else {
          accumulate(n.b, g);
        }
        break;
    }
  }

  std::vector<Idx> out(wrt.size());
  for (size_t k = 0; k < wrt.size(); ++k) {
    const Idx w = wrt[k];
    out[k] = (w <= root && adj[w] >= 0) ? adj[w] : constant(0.0);
  }
  return out;
}

std::vector<double> Tape::gradient_values(Idx root, std::span<const Idx> wrt) {
  auto g = gradient(root, wrt);
  std::vector<double> out(g.size());
  for (size_t i = 0; i < g.size(); ++i) out[i] = val(g[i]);
  return out;
}

}  // namespace rgia::num
