#pragma once

#include "cfnet/continued_fraction.hpp"
#include "cfnet/ops.hpp"

namespace cfnet {

// Per-element state saved by the continuant route: the full continuant table
// of every fraction plus the guarded reciprocal of its K_d. Computed once in
// the forward pass; the backward pass only multiplies, squares, and flips
// signs - no further division.
template <typename Scalar>
struct CFLayerSaved {
  Tensor<Scalar> tables;  // [n, d+1], row i holds K_0..K_d of element i
  Tensor<Scalar> inv_kd;  // [n]
};

// Fractional part f~ of a depth-d continued fraction applied independently
// over the last axis: [..., d] -> [...]. One division per element.
template <typename Scalar>
Var<Scalar> cf_layer(Var<Scalar> a, const PoleGuard& guard) {
  Tape<Scalar>& t = *a.tape;
  guard.validate();
  const Tensor<Scalar>& va = t.value(a.id);
  const Index d = va.last_dim();
  detail::require(va.rank() >= 1 && d >= 1, "cf_layer: last axis must hold d >= 1 denominators");
  for (Index i = 0; i < va.size(); ++i) {
    if (!std::isfinite(static_cast<double>(va[i]))) {
      throw Error(detail::cat("cf_layer: input element ", i, " is not finite: ", va[i]));
    }
  }

  const Index n = va.outer_size();
  const Scalar eps = static_cast<Scalar>(guard.epsilon);
  CFLayerSaved<Scalar> saved{Tensor<Scalar>({n, d + 1}), Tensor<Scalar>({n})};
  Tensor<Scalar> out(va.outer_shape());
  {
    ConstMatMap<Scalar> am(va.data(), n, d);
    MatMap<Scalar> km(saved.tables.data(), n, d + 1);
    for (Index r = 0; r < n; ++r) {
      km(r, 0) = Scalar(1);
      km(r, 1) = am(r, d - 1);
      for (Index j = 2; j <= d; ++j) {
        km(r, j) = am(r, d - j) * km(r, j - 1) + km(r, j - 2);
        detail::check_overflow(km(r, j), j);
      }
      saved.inv_kd[r] = Scalar(1) / guard_denominator(km(r, d), eps);
      out[r] = km(r, d - 1) * saved.inv_kd[r];
    }
  }
  t.count_cf_divisions(n);

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y, saved, n, d]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    Tensor<Scalar>& da = t.grad_buffer(a.id);
    ConstMatMap<Scalar> km(saved.tables.data(), n, d + 1);
    MatMap<Scalar> dm(da.data(), n, d);
    for (Index r = 0; r < n; ++r) {
      const Scalar up = g[r];
      const Scalar inv = saved.inv_kd[r];
      for (Index k = 1; k <= d; ++k) {
        const Scalar ratio = km(r, d - k) * inv;
        const Scalar sq = ratio * ratio;
        dm(r, k - 1) += up * ((k % 2 == 0) ? sq : -sq);
      }
    }
  });
  return y;
}

// The same function built the layer-by-layer way: d guarded reciprocals
// chained through the tape, one division per layer per element. This is the
// pre-continuants formulation, kept as the benchmark arm and as an oracle.
template <typename Scalar>
Var<Scalar> cf_literal_chain(Var<Scalar> a, const PoleGuard& guard) {
  Tape<Scalar>& t = *a.tape;
  guard.validate();
  const Index d = t.value(a.id).last_dim();
  detail::require(d >= 1, "cf_literal_chain: last axis must hold d >= 1 denominators");

  Var<Scalar> tail = select_last(a, d - 1);
  for (Index i = d - 2; i >= 0; --i) {
    tail = add(select_last(a, i), guarded_reciprocal(tail, guard));
  }
  return guarded_reciprocal(tail, guard);
}

}  // namespace cfnet
