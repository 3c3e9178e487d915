#pragma once

#include <functional>
#include <utility>
#include <vector>

#include "cfnet/tensor.hpp"

namespace cfnet {

template <typename Scalar>
class Tape;

// Lightweight handle into a tape. Ops take and return these; the tensors
// themselves live in the tape nodes.
template <typename Scalar>
struct Var {
  Tape<Scalar>* tape = nullptr;
  Index id = -1;

  bool valid() const { return tape != nullptr && id >= 0; }
  const Tensor<Scalar>& value() const { return tape->value(id); }
  const std::vector<Index>& shape() const { return value().shape(); }
};

// Append-only record of the forward computation. Backward walks the nodes in
// strict reverse append order, so gradient accumulation is deterministic for
// a given forward execution. One tape per training step/thread.
template <typename Scalar>
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  Var<Scalar> leaf(Tensor<Scalar> value, bool requires_grad) {
    nodes_.push_back(Node{std::move(value), Tensor<Scalar>{}, requires_grad, nullptr});
    return {this, static_cast<Index>(nodes_.size()) - 1};
  }

  Var<Scalar> constant(Tensor<Scalar> value) { return leaf(std::move(value), false); }

  // Records an operation node; the backward closure is attached afterwards
  // (it usually needs the new node's id). Saved values must be captured by
  // value and never mutated after the forward pass.
  Var<Scalar> make_node(Tensor<Scalar> value, bool needs_grad) {
    nodes_.push_back(Node{std::move(value), Tensor<Scalar>{}, needs_grad, nullptr});
    return {this, static_cast<Index>(nodes_.size()) - 1};
  }

  void set_backward(Index id, std::function<void()> backward) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.needs_grad) n.backward = std::move(backward);
  }

  const Tensor<Scalar>& value(Index id) const { return nodes_[static_cast<size_t>(id)].value; }
  bool needs_grad(Index id) const { return nodes_[static_cast<size_t>(id)].needs_grad; }

  // Gradient buffer for a node, allocated as zeros on first touch.
  Tensor<Scalar>& grad_buffer(Index id) {
    Node& n = nodes_[static_cast<size_t>(id)];
    if (n.grad.empty()) n.grad = Tensor<Scalar>::zeros(n.value.shape());
    return n.grad;
  }

  bool has_grad(Index id) const { return !nodes_[static_cast<size_t>(id)].grad.empty(); }

  // Reverse-topological accumulation from a scalar loss. Nodes recorded after
  // the loss cannot contribute and are skipped.
  void backward(Var<Scalar> loss) {
    detail::require(loss.valid() && loss.tape == this, "backward: loss is not on this tape");
    detail::require(value(loss.id).size() == 1, "backward: loss must be a scalar");
    grad_buffer(loss.id).arr().setConstant(Scalar(1));
    for (Index i = loss.id; i >= 0; --i) {
      Node& n = nodes_[static_cast<size_t>(i)];
      if (n.backward && n.needs_grad && !n.grad.empty()) n.backward();
    }
  }

  // Gradient of a leaf after backward(); zeros if the node was never reached.
  const Tensor<Scalar>& grad(Var<Scalar> v) {
    detail::require(v.valid() && v.tape == this, "grad: variable is not on this tape");
    return grad_buffer(v.id);
  }

  std::size_t node_count() const { return nodes_.size(); }

  // Divisions performed by continued-fraction evaluations recorded on this
  // tape (one per element for the continuant route, one per layer for the
  // literal route). Generic ops do not touch this counter.
  long long cf_divisions() const { return cf_divisions_; }
  void count_cf_divisions(long long n) { cf_divisions_ += n; }

  void clear() {
    nodes_.clear();
    cf_divisions_ = 0;
  }

 private:
  struct Node {
    Tensor<Scalar> value;
    Tensor<Scalar> grad;
    bool needs_grad = false;
    std::function<void()> backward;
  };

  std::vector<Node> nodes_;
  long long cf_divisions_ = 0;
};

}  // namespace cfnet
