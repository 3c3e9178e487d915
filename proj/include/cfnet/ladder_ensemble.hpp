#pragma once

#include <vector>

#include "cfnet/cf_layer.hpp"
#include "cfnet/params.hpp"
#include "cfnet/range_tracker.hpp"
#include "cfnet/rng.hpp"

namespace cfnet {

struct LadderConfig {
  Index p = 0;       // input dimension
  Index q = 0;       // output dimension
  Index ladders = 0; // L
  Index depth = 0;   // d
  PoleGuard guard;
  bool bias = true;  // leading-1 augmentation of the input

  void validate() const {
    detail::require(p >= 1 && q >= 1 && ladders >= 1, "ladder config: p, q, L must be >= 1");
    detail::require(depth >= 1 && depth <= 16,
                    detail::cat("ladder config: depth must be in [1, 16], got ", depth));
    guard.validate();
  }
};

// Collapsed linear combination of L continued-fraction ladders:
//   y = U x~ + V z,   z_j = f~(W^(j) x~),
// where x~ is the input with a leading 1 when bias is enabled. All a_0 terms
// are folded into the direct path U, so the ladder weight rows cover depths
// 1..d only. Weight rows are stored per depth ([L, p(+1)] each) because the
// training schedule freezes and unfreezes whole depths at a time.
template <typename Scalar>
class LadderEnsemble {
 public:
  LadderEnsemble(const LadderConfig& cfg, Rng& rng)
      : cfg_(cfg),
        u_(Tensor<Scalar>({cfg.q, cfg.p + (cfg.bias ? 1 : 0)})),
        v_(Tensor<Scalar>({cfg.q, cfg.ladders})),
        tracker_(cfg.ladders) {
    cfg_.validate();
    const Index pin = cfg.p + (cfg.bias ? 1 : 0);
    const double w_std = 0.02 / std::sqrt(static_cast<double>(cfg.p));
    for (Index k = 0; k < cfg.depth; ++k) {
      Tensor<Scalar> wk({cfg.ladders, pin});
      for (Index j = 0; j < cfg.ladders; ++j) {
        for (Index c = 0; c < pin; ++c) {
          // Bias slot 1.0 puts every a_k near 1 at init: the continued
          // fraction starts in the well-conditioned Fibonacci-ratio regime
          // with K_d far from the pole guard.
          const bool bias_slot = cfg.bias && c == 0;
          wk.as_matrix()(j, c) =
              bias_slot ? Scalar(1) : static_cast<Scalar>(rng.normal(0.0, w_std));
        }
      }
      w_.push_back(std::move(wk));
    }
    for (Index i = 0; i < u_.size(); ++i) u_[i] = static_cast<Scalar>(rng.normal(0.0, 0.02));
    for (Index i = 0; i < v_.size(); ++i) v_[i] = static_cast<Scalar>(rng.normal(0.0, 0.02));
  }

  const LadderConfig& config() const { return cfg_; }
  RangeTracker<Scalar>& tracker() { return tracker_; }
  const RangeTracker<Scalar>& tracker() const { return tracker_; }

  void collect_params(ParamRegistry<Scalar>& reg, const std::string& prefix) {
    reg.add(prefix + ".U", u_, 0, true);
    reg.add(prefix + ".V", v_, 0, true);
    for (Index k = 0; k < cfg_.depth; ++k) {
      reg.add(detail::cat(prefix, ".W", k + 1), w_[static_cast<size_t>(k)],
              static_cast<int>(k + 1), true);
    }
  }

  // x: [..., p] -> [..., q]. In recording mode the tracker folds in the raw
  // ladder outputs; in clipping mode the outputs are clamped to the recorded
  // range before the V combination.
  Var<Scalar> forward(ParamBinder<Scalar>& bind, Var<Scalar> x) {
    const Tensor<Scalar>& vx = x.value();
    detail::require(vx.last_dim() == cfg_.p,
                    detail::cat("ladder ensemble: expected input [..., ", cfg_.p, "], got ",
                                detail::shape_str(vx.shape())));
    Var<Scalar> xa = cfg_.bias ? augment_ones(x) : x;
    Var<Scalar> direct = matmul_nt(xa, bind(u_));

    std::vector<Var<Scalar>> denominators;
    denominators.reserve(static_cast<size_t>(cfg_.depth));
    for (auto& wk : w_) denominators.push_back(matmul_nt(xa, bind(wk)));
    Var<Scalar> z = cf_layer(stack_last(denominators), cfg_.guard);

    if (tracker_.mode() == RangeTracker<Scalar>::Mode::Recording) {
      tracker_.observe(z.value());
    } else if (tracker_.has_bounds()) {
      z = clamp_channels(z, tracker_.lo(), tracker_.hi());
    }
    return add(direct, matmul_nt(z, bind(v_)));
  }

  // Direct tensor access for tests and checkpointing.
  Tensor<Scalar>& u() { return u_; }
  Tensor<Scalar>& v() { return v_; }
  std::vector<Tensor<Scalar>>& w() { return w_; }

  Index parameter_count() const {
    Index n = u_.size() + v_.size();
    for (const auto& wk : w_) n += wk.size();
    return n;
  }

 private:
  LadderConfig cfg_;
  Tensor<Scalar> u_;
  Tensor<Scalar> v_;
  std::vector<Tensor<Scalar>> w_;  // w_[k-1] holds depth-k rows for all ladders
  RangeTracker<Scalar> tracker_;
};

}  // namespace cfnet
