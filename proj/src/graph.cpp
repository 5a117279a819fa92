#include "ocdcvae/graph.hpp"

#include "ocdcvae/error.hpp"

namespace ocdcvae {

const Tensor2& Var::value() const {
  if (graph_ == nullptr) throw StateError("use of an unbound Var");
  return graph_->node(*this).value;
}

double Var::scalar() const {
  const auto& v = value();
  if (v.size() != 1) throw DimensionError("scalar() on a " + shape_string(v) + " node");
  return v(0, 0);
}

bool Var::requires_grad() const {
  if (graph_ == nullptr) throw StateError("use of an unbound Var");
  return graph_->node(*this).requires_grad;
}

const Graph::Node& Graph::node(const Var& v) const {
  if (consumed_) throw StateError("graph trace already consumed by backward()");
  return nodes_.at(v.id_);
}

void Graph::check_owner(const Var& v) const {
  if (v.graph_ != this) throw StateError("Var belongs to a different graph");
  if (consumed_) throw StateError("graph trace already consumed by backward()");
}

Var Graph::constant(Tensor2 value) {
  if (consumed_) throw StateError("graph trace already consumed by backward()");
  Node n;
  n.value = std::move(value);
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::parameter(Parameter& p) {
  if (consumed_) throw StateError("graph trace already consumed by backward()");
  Node n;
  n.value = p.value;
  n.param = &p;
  n.requires_grad = true;
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

Var Graph::record(Tensor2 value, std::vector<Var> inputs, BackwardFn backward) {
  Node n;
  n.value = std::move(value);
  n.inputs.reserve(inputs.size());
  for (const auto& in : inputs) {
    check_owner(in);
    n.inputs.push_back(in.id_);
    n.requires_grad = n.requires_grad || nodes_[in.id_].requires_grad;
  }
  if (n.requires_grad) {
    if (!backward) throw StateError("node needs a gradient but has no backward function");
    n.backward = std::move(backward);
  }
  nodes_.push_back(std::move(n));
  return Var(this, nodes_.size() - 1);
}

void Graph::backward(Var loss) {
  if (consumed_ || nodes_.empty()) {
    throw StateError("backward() called without a recorded forward trace");
  }
  check_owner(loss);
  const Node& out = nodes_[loss.id_];
  if (out.value.size() != 1) {
    throw DimensionError("backward() needs a scalar loss, got " + shape_string(out.value));
  }
  require_finite(out.value, "loss");

  nodes_[loss.id_].grad = Tensor2::Ones(1, 1);
  std::vector<Tensor2*> input_grads;
  for (std::size_t i = loss.id_ + 1; i-- > 0;) {
    Node& n = nodes_[i];
    if (!n.requires_grad || n.grad.size() == 0) continue;
    if (n.param != nullptr) {
      n.param->grad += n.grad;
      continue;
    }
    input_grads.clear();
    for (std::size_t in : n.inputs) {
      Node& src = nodes_[in];
      if (!src.requires_grad) {
        input_grads.push_back(nullptr);
        continue;
      }
      if (src.grad.size() == 0) src.grad = Tensor2::Zero(src.value.rows(), src.value.cols());
      input_grads.push_back(&src.grad);
    }
    n.backward(n.grad, input_grads);
  }
  consumed_ = true;
  nodes_.clear();
  nodes_.shrink_to_fit();
}

}  // namespace ocdcvae
