#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <span>

#include "cfnet/common.hpp"
#include "cfnet/pole_guard.hpp"

// Scalar continued-fraction mathematics.
//
// A depth-d continued fraction a0 + 1/(a1 + 1/(a2 + ... + 1/ad)) equals
// a0 + K_{d-1}(a2..ad) / K_d(a1..ad), where K_j are continuant polynomials.
// The table built here is tail-aligned: entry j is K_j over the last j
// partial denominators, so the ratio above and every gradient ratio
// K_{d-k}(a_{k+1}..a_d) / K_d can be read straight out of one table.
// Only a single division (the reciprocal of the guarded K_d) is ever
// performed per evaluation; the gradient reuses that reciprocal.

namespace cfnet {

inline constexpr double kContinuantOverflowLimit = 1e100;

template <typename Scalar>
struct ContinuantTable {
  VectorX<Scalar> k;   // k[j] = K_j(a_{d-j+1}, ..., a_d), j = 0..d
  Scalar kd_guarded{};
  Scalar inv_kd{};
  int divisions_used = 0;

  Index depth() const { return k.size() - 1; }
};

namespace detail {

template <typename Scalar>
void check_finite(std::span<const Scalar> a, const char* what) {
  for (size_t i = 0; i < a.size(); ++i) {
    if (!std::isfinite(static_cast<double>(a[i]))) {
      throw Error(cat(what, " entry ", i, " is not finite: ", a[i]));
    }
  }
}

template <typename Scalar>
void check_overflow(Scalar k, Index j) {
  if (std::abs(static_cast<double>(k)) > kContinuantOverflowLimit) {
    throw Error(cat("continuant K_", j, " exceeded magnitude 1e100; depth/scale out of supported range"));
  }
}

}  // namespace detail

// Builds K_0..K_d over the tail of a = (a_1, ..., a_d) and the guarded
// reciprocal of K_d. Exactly one division.
template <typename Scalar>
ContinuantTable<Scalar> continuants_forward(std::span<const Scalar> a, const PoleGuard& guard) {
  const Index d = static_cast<Index>(a.size());
  detail::require(d >= 1, "continued fraction depth must be >= 1");
  guard.validate();
  detail::check_finite(a, "partial denominator");

  ContinuantTable<Scalar> table;
  table.k.resize(d + 1);
  table.k[0] = Scalar(1);
  table.k[1] = a[d - 1];
  for (Index j = 2; j <= d; ++j) {
    table.k[j] = a[d - j] * table.k[j - 1] + table.k[j - 2];
    detail::check_overflow(table.k[j], j);
  }
  table.kd_guarded = guard_denominator(table.k[d], static_cast<Scalar>(guard.epsilon));
  table.inv_kd = Scalar(1) / table.kd_guarded;
  table.divisions_used = 1;
  return table;
}

// f(a0, a) = a0 + K_{d-1} / K_d, using the reciprocal already in the table.
template <typename Scalar>
Scalar cf_eval(const ContinuantTable<Scalar>& table, Scalar a0) {
  return a0 + table.k[table.depth() - 1] * table.inv_kd;
}

// Partial derivatives of the fractional part:
//   d f~ / d a_k = (-1)^k (K_{d-k} / K_d)^2,  k = 1..d  (entry k-1 of result).
// No divisions; each ratio is K_{d-k} * inv_kd.
template <typename Scalar>
VectorX<Scalar> cf_grad(const ContinuantTable<Scalar>& table) {
  const Index d = table.depth();
  VectorX<Scalar> grad(d);
  for (Index k = 1; k <= d; ++k) {
    const Scalar ratio = table.k[d - k] * table.inv_kd;
    const Scalar sq = ratio * ratio;
    grad[k - 1] = (k % 2 == 0) ? sq : -sq;
  }
  return grad;
}

// Bottom-up evaluation with one guarded division per layer: the form the
// ladder takes before rewriting it through continuants. Every intermediate
// denominator is guarded with the same epsilon. Performs exactly d divisions;
// the count is reported through `divisions` when given.
template <typename Scalar>
Scalar cf_literal(std::span<const Scalar> a, Scalar a0, const PoleGuard& guard,
                  long* divisions = nullptr) {
  const Index d = static_cast<Index>(a.size());
  detail::require(d >= 1, "continued fraction depth must be >= 1");
  guard.validate();
  const Scalar eps = static_cast<Scalar>(guard.epsilon);

  long count = 0;
  Scalar tail = a[d - 1];
  for (Index i = d - 2; i >= 0; --i) {
    tail = a[i] + Scalar(1) / guard_denominator(tail, eps);
    ++count;
  }
  const Scalar value = a0 + Scalar(1) / guard_denominator(tail, eps);
  ++count;
  if (divisions) *divisions += count;
  return value;
}

// Continuant K_n(a_1..a_n) of an arbitrary sequence; K_0 (empty span) is 1.
template <typename Scalar>
Scalar continuant(std::span<const Scalar> a) {
  Scalar prev = Scalar(0);  // K_{-1}
  Scalar cur = Scalar(1);   // K_0
  for (size_t j = 0; j < a.size(); ++j) {
    const Scalar next = a[j] * cur + prev;
    prev = cur;
    cur = next;
    detail::check_overflow(cur, static_cast<Index>(j + 1));
  }
  return cur;
}

// d K_k(a_1..a_k) / d a_l = K_{l-1}(a_1..a_{l-1}) * K_{k-l}(a_{l+1}..a_k),
// with K_0 = 1 for empty prefix/suffix. l is 1-based.
template <typename Scalar>
Scalar continuant_partial(std::span<const Scalar> a, Index l) {
  const Index k = static_cast<Index>(a.size());
  detail::require(l >= 1 && l <= k, detail::cat("continuant partial index l=", l, " out of range [1, ", k, "]"));
  const Scalar prefix = continuant(a.subspan(0, l - 1));
  const Scalar suffix = continuant(a.subspan(l));
  return prefix * suffix;
}

// Residual of the product identity
//   K_k(a_0..a_{k-1}) K_d(a_1..a_d) - K_{k-1}(a_1..a_{k-1}) K_{d+1}(a_0..a_d)
//     = (-1)^k K_{d-k}(a_{k+1}..a_d)
// for a sequence given with its leading a_0 (so a.size() = d + 1). Should be
// zero up to rounding; k = 0 uses K_{-1} = 0 and vanishes exactly.
template <typename Scalar>
Scalar check_continuant_identity(std::span<const Scalar> a_with_leading, Index k) {
  const Index d = static_cast<Index>(a_with_leading.size()) - 1;
  detail::require(d >= 1, "identity check needs d >= 1");
  detail::require(k >= 0 && k <= d, detail::cat("identity index k=", k, " out of range [0, ", d, "]"));

  const Scalar k_prefix = continuant(a_with_leading.subspan(0, k));          // K_k(a_0..a_{k-1})
  const Scalar k_d = continuant(a_with_leading.subspan(1));                  // K_d(a_1..a_d)
  const Scalar k_prefix_m1 =
      (k == 0) ? Scalar(0) : continuant(a_with_leading.subspan(1, k - 1));   // K_{k-1}(a_1..a_{k-1})
  const Scalar k_dp1 = continuant(a_with_leading);                           // K_{d+1}(a_0..a_d)
  const Scalar k_suffix = continuant(a_with_leading.subspan(k + 1));         // K_{d-k}(a_{k+1}..a_d)

  const Scalar sign = (k % 2 == 0) ? Scalar(1) : Scalar(-1);
  return k_prefix * k_d - k_prefix_m1 * k_dp1 - sign * k_suffix;
}

// K_k as the determinant of the tridiagonal matrix with diagonal a,
// superdiagonal +1 and subdiagonal -1, evaluated by LU factorization.
// This is an independent route to the same polynomial as the recursion.
template <typename Scalar>
Scalar tridiagonal_determinant(std::span<const Scalar> a) {
  const Index k = static_cast<Index>(a.size());
  detail::require(k >= 1, "tridiagonal determinant needs k >= 1");
  Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic> m =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>::Zero(k, k);
  for (Index i = 0; i < k; ++i) {
    m(i, i) = a[i];
    if (i + 1 < k) {
      m(i, i + 1) = Scalar(1);
      m(i + 1, i) = Scalar(-1);
    }
  }
  return Eigen::PartialPivLU<Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>>(m).determinant();
}

}  // namespace cfnet
