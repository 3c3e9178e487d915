#pragma once

#include <cmath>
#include <vector>

#include "cfnet/params.hpp"

namespace cfnet {

// First iteration at which depth-k parameters receive updates under the
// dyadic schedule: linear components (depth 0) from the start, depth k >= 1
// from ceil(t (1 - 2^-k)), so depth k trains for the last ~t / 2^k
// iterations (half, then a quarter, then an eighth, ...).
inline long long unfreeze_iter(int depth, long long total_iters) {
  detail::require(depth >= 0, "unfreeze_iter: depth must be >= 0");
  if (depth == 0) return 0;
  if (depth >= 63) return total_iters;
  const long long pow2 = 1LL << depth;
  const long long numer = total_iters * (pow2 - 1);
  return (numer + pow2 - 1) / pow2;  // ceil
}

struct OptimizerConfig {
  double lr = 3e-4;
  double beta1 = 0.9;
  double beta2 = 0.95;
  double eps = 1e-8;
  double weight_decay = 0.1;
  double clip_norm = 1.0;  // 0 disables clipping
  bool schedule = true;    // dyadic unfreeze on/off
  long long total_iters = 0;
};

// Adam with decoupled weight decay and the dyadic freeze mask. A frozen
// parameter receives no update of any kind (no moment update, no decay), so
// it stays bit-identical to its initialization until its unfreeze iteration.
// Moments of a late group start from zero when the group activates; bias
// correction counts that group's own steps.
template <typename Scalar>
class AdamOptimizer {
 public:
  AdamOptimizer(const ParamRegistry<Scalar>& registry, const OptimizerConfig& cfg)
      : cfg_(cfg) {
    detail::require(cfg.total_iters > 0, "optimizer: total_iters must be set");
    for (const auto& p : registry.all()) {
      slots_.push_back(Slot{Tensor<Scalar>::zeros(p.tensor->shape()),
                            Tensor<Scalar>::zeros(p.tensor->shape()), 0});
    }
  }

  bool group_active(int depth, long long iter) const {
    if (!cfg_.schedule) return true;
    return iter >= unfreeze_iter(depth, cfg_.total_iters);
  }

  std::vector<int> active_depths(long long iter, int max_depth) const {
    std::vector<int> out;
    for (int k = 0; k <= max_depth; ++k) {
      if (group_active(k, iter)) out.push_back(k);
    }
    return out;
  }

  // One update. `grads` aligns with the registry order used at construction;
  // `iter` is the 0-based index of the step being applied.
  void step(const ParamRegistry<Scalar>& registry, const std::vector<Tensor<Scalar>>& grads,
            long long iter) {
    const auto& params = registry.all();
    detail::require(grads.size() == params.size(), "optimizer: gradient count mismatch");

    Scalar clip_scale = Scalar(1);
    if (cfg_.clip_norm > 0) {
      double sq = 0.0;
      for (const auto& g : grads) sq += static_cast<double>((g.arr() * g.arr()).sum());
      const double norm = std::sqrt(sq);
      if (norm > cfg_.clip_norm) clip_scale = static_cast<Scalar>(cfg_.clip_norm / norm);
    }

    for (size_t i = 0; i < params.size(); ++i) {
      if (!group_active(params[i].depth_group, iter)) continue;
      Slot& slot = slots_[i];
      Tensor<Scalar>& value = *params[i].tensor;
      slot.steps += 1;

      const Scalar b1 = static_cast<Scalar>(cfg_.beta1);
      const Scalar b2 = static_cast<Scalar>(cfg_.beta2);
      const auto g = grads[i].arr() * clip_scale;
      slot.m.arr() = b1 * slot.m.arr() + (Scalar(1) - b1) * g;
      slot.v.arr() = b2 * slot.v.arr() + (Scalar(1) - b2) * g * g;

      const Scalar corr1 = Scalar(1) - static_cast<Scalar>(std::pow(cfg_.beta1, slot.steps));
      const Scalar corr2 = Scalar(1) - static_cast<Scalar>(std::pow(cfg_.beta2, slot.steps));
      const Scalar lr = static_cast<Scalar>(cfg_.lr);
      value.arr() -= lr * (slot.m.arr() / corr1) /
                     ((slot.v.arr() / corr2).sqrt() + static_cast<Scalar>(cfg_.eps));
      if (params[i].decay && cfg_.weight_decay > 0) {
        value.arr() -= lr * static_cast<Scalar>(cfg_.weight_decay) * value.arr();
      }
    }
  }

  const OptimizerConfig& config() const { return cfg_; }

  // Checkpoint access: moments and per-group step counts by registry index.
  Tensor<Scalar>& moment_m(size_t i) { return slots_[i].m; }
  Tensor<Scalar>& moment_v(size_t i) { return slots_[i].v; }
  long long& step_count(size_t i) { return slots_[i].steps; }
  size_t slot_count() const { return slots_.size(); }

 private:
  struct Slot {
    Tensor<Scalar> m;
    Tensor<Scalar> v;
    long long steps = 0;
  };

  OptimizerConfig cfg_;
  std::vector<Slot> slots_;
};

}  // namespace cfnet
