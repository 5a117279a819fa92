#pragma once

#include "ocdcvae/param_store.hpp"
#include "ocdcvae/tensor.hpp"

#include <functional>
#include <span>
#include <vector>

namespace ocdcvae {

class Graph;

// Handle to a node recorded on a Graph. Cheap to copy; only valid while the
// owning graph is alive and its trace has not been consumed by backward().
class Var {
 public:
  Var() = default;

  const Tensor2& value() const;
  Index rows() const { return value().rows(); }
  Index cols() const { return value().cols(); }
  // Convenience for 1x1 nodes.
  double scalar() const;
  bool requires_grad() const;
  Graph* graph() const { return graph_; }

 private:
  friend class Graph;
  Var(Graph* g, std::size_t id) : graph_(g), id_(id) {}

  Graph* graph_ = nullptr;
  std::size_t id_ = 0;
};

// Receives d(loss)/d(output) and accumulates into the inputs' gradients.
// input_grads[i] is null when input i does not require a gradient.
using BackwardFn = std::function<void(const Tensor2& grad_out, std::span<Tensor2* const> input_grads)>;

// Reverse-mode tape for feed-forward compositions. Nodes are appended in
// evaluation order, so a reverse sweep over the tape is a valid topological
// order for backpropagation.
class Graph {
 public:
  Graph() = default;
  Graph(const Graph&) = delete;
  Graph& operator=(const Graph&) = delete;

  Var constant(Tensor2 value);
  // Leaf bound to a stored parameter; backward() accumulates into its grad slot.
  Var parameter(Parameter& p);
  // Custom node. `backward` may be empty when no input requires a gradient.
  Var record(Tensor2 value, std::vector<Var> inputs, BackwardFn backward);

  // Propagates d(loss)/d(node) through the trace and accumulates parameter
  // gradients. The trace is consumed: afterwards every Var of this graph is
  // invalid and a second call throws StateError.
  void backward(Var loss);

  bool consumed() const { return consumed_; }
  std::size_t size() const { return nodes_.size(); }

 private:
  friend class Var;

  struct Node {
    Tensor2 value;
    Tensor2 grad;
    std::vector<std::size_t> inputs;
    BackwardFn backward;
    Parameter* param = nullptr;
    bool requires_grad = false;
  };

  const Node& node(const Var& v) const;
  void check_owner(const Var& v) const;

  std::vector<Node> nodes_;
  bool consumed_ = false;
};

}  // namespace ocdcvae
