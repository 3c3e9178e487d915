#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "cfnet/tape.hpp"

namespace cfnet {

// One named parameter tensor. depth_group 0 covers every linear component
// (weights applied outside the continued fractions, embeddings, norms, and
// the a_0 / w_0 terms); depth_group k >= 1 marks the ladder row at depth k,
// which the dyadic schedule unfreezes late.
template <typename Scalar>
struct Param {
  std::string name;
  Tensor<Scalar>* tensor = nullptr;
  int depth_group = 0;
  bool decay = false;
};

template <typename Scalar>
class ParamRegistry {
 public:
  void add(std::string name, Tensor<Scalar>& tensor, int depth_group, bool decay) {
    for (const auto& p : params_) {
      detail::require(p.name != name, detail::cat("duplicate parameter name '", name, "'"));
    }
    params_.push_back(Param<Scalar>{std::move(name), &tensor, depth_group, decay});
  }

  const std::vector<Param<Scalar>>& all() const { return params_; }

  Index total_size() const {
    Index n = 0;
    for (const auto& p : params_) n += p.tensor->size();
    return n;
  }

  const Param<Scalar>* find(const std::string& name) const {
    for (const auto& p : params_) {
      if (p.name == name) return &p;
    }
    return nullptr;
  }

 private:
  std::vector<Param<Scalar>> params_;
};

// Binds module-owned parameter tensors into a tape, once each, so that every
// use of a parameter in one forward pass shares a single leaf and gradients
// accumulate across uses.
template <typename Scalar>
class ParamBinder {
 public:
  ParamBinder(Tape<Scalar>& tape, bool requires_grad)
      : tape_(&tape), requires_grad_(requires_grad) {}

  Var<Scalar> operator()(Tensor<Scalar>& tensor) {
    const auto it = bound_.find(&tensor);
    if (it != bound_.end()) return it->second;
    const Var<Scalar> v = tape_->leaf(tensor, requires_grad_);
    bound_.emplace(&tensor, v);
    return v;
  }

  // Var previously bound for this tensor; invalid Var if it never entered
  // the forward pass.
  Var<Scalar> bound_var(Tensor<Scalar>& tensor) const {
    const auto it = bound_.find(&tensor);
    return it == bound_.end() ? Var<Scalar>{} : it->second;
  }

  Tape<Scalar>& tape() { return *tape_; }
  bool requires_grad() const { return requires_grad_; }

 private:
  Tape<Scalar>* tape_;
  bool requires_grad_;
  std::unordered_map<Tensor<Scalar>*, Var<Scalar>> bound_;
};

}  // namespace cfnet
