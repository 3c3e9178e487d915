#pragma once

#include <limits>

#include "cfnet/tensor.hpp"

namespace cfnet {

// Running per-ladder output range. During training the tracker records the
// minimum and maximum each ladder has produced; at inference it supplies the
// clamp bounds so outputs never leave the range seen in training.
template <typename Scalar>
class RangeTracker {
 public:
  enum class Mode { Recording, Clipping };

  explicit RangeTracker(Index ladders)
      : lo_(Tensor<Scalar>::full({ladders}, std::numeric_limits<Scalar>::infinity())),
        hi_(Tensor<Scalar>::full({ladders}, -std::numeric_limits<Scalar>::infinity())) {}

  Mode mode() const { return mode_; }
  void set_mode(Mode m) { mode_ = m; }
  Index ladders() const { return lo_.size(); }
  long long observed_count() const { return observed_; }

  // Folds a batch of ladder outputs [..., ladders] into the running extrema.
  void observe(const Tensor<Scalar>& z) {
    detail::require(mode_ == Mode::Recording, "range tracker: observe called in clipping mode");
    const Index c = lo_.size();
    detail::require(z.last_dim() == c,
                    detail::cat("range tracker: expected last axis ", c, ", got ",
                                detail::shape_str(z.shape())));
    const Index outer = z.outer_size();
    ConstMatMap<Scalar> zm(z.data(), outer, c);
    for (Index j = 0; j < c; ++j) {
      lo_[j] = std::min(lo_[j], zm.col(j).minCoeff());
      hi_[j] = std::max(hi_[j], zm.col(j).maxCoeff());
    }
    observed_ += outer;
  }

  // Folds outputs covering only the first z.last_dim() ladders (sequences
  // shorter than the configured maximum).
  void observe_prefix(const Tensor<Scalar>& z) {
    detail::require(mode_ == Mode::Recording, "range tracker: observe called in clipping mode");
    const Index c = z.last_dim();
    detail::require(c <= lo_.size(), "range tracker: more channels than ladders");
    const Index outer = z.outer_size();
    ConstMatMap<Scalar> zm(z.data(), outer, c);
    for (Index j = 0; j < c; ++j) {
      lo_[j] = std::min(lo_[j], zm.col(j).minCoeff());
      hi_[j] = std::max(hi_[j], zm.col(j).maxCoeff());
    }
    observed_ += outer;
  }

  bool has_bounds() const { return observed_ > 0; }
  const Tensor<Scalar>& lo() const { return lo_; }
  const Tensor<Scalar>& hi() const { return hi_; }

  Tensor<Scalar> lo_first(Index n) const {
    Tensor<Scalar> out({n});
    for (Index j = 0; j < n; ++j) out[j] = lo_[j];
    return out;
  }
  Tensor<Scalar> hi_first(Index n) const {
    Tensor<Scalar> out({n});
    for (Index j = 0; j < n; ++j) out[j] = hi_[j];
    return out;
  }

  // Checkpoint restore.
  void restore(Tensor<Scalar> lo, Tensor<Scalar> hi, long long observed) {
    detail::require(lo.size() == lo_.size() && hi.size() == hi_.size(),
                    "range tracker: restored bound size mismatch");
    lo_ = std::move(lo);
    hi_ = std::move(hi);
    observed_ = observed;
  }

 private:
  Tensor<Scalar> lo_;
  Tensor<Scalar> hi_;
  long long observed_ = 0;
  Mode mode_ = Mode::Recording;
};

}  // namespace cfnet
