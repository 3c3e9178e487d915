#pragma once

#include <cmath>

#include "cfnet/common.hpp"

namespace cfnet {

// Configuration for keeping continued-fraction denominators away from zero.
struct PoleGuard {
  double epsilon = 0.01;

  void validate() const {
    detail::require(epsilon > 0.0, detail::cat("pole guard epsilon must be > 0, got ", epsilon));
  }
};

// Maps kd to sgn(kd) * max(|kd|, eps). sgn(0) is taken as +1 so the result
// always has magnitude at least eps.
template <typename Scalar>
inline Scalar guard_denominator(Scalar kd, Scalar eps) {
  if (kd > Scalar(0)) return kd < eps ? eps : kd;
  if (kd < Scalar(0)) return kd > -eps ? -eps : kd;
  return eps;
}

}  // namespace cfnet
