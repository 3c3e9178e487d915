#pragma once

#include <cmath>
#include <vector>

#include "cfnet/pole_guard.hpp"
#include "cfnet/tape.hpp"

// Primitive tensor operations over tape variables. Each op records a value
// node plus a backward closure that accumulates into the parents' gradient
// buffers. Binary elementwise ops support suffix broadcasting: the second
// operand's shape must equal a trailing slice of the first's (a bias [p]
// against activations [b, l, p], a positional table [l, p] against
// [b, l, p], and so on).

namespace cfnet {

namespace detail {

template <typename Scalar>
bool is_suffix_shape(const Tensor<Scalar>& a, const Tensor<Scalar>& b) {
  const auto& sa = a.shape();
  const auto& sb = b.shape();
  if (sb.size() > sa.size()) return false;
  for (size_t i = 0; i < sb.size(); ++i) {
    if (sb[sb.size() - 1 - i] != sa[sa.size() - 1 - i]) return false;
  }
  return true;
}

template <typename Scalar>
void check_broadcast(const Tensor<Scalar>& a, const Tensor<Scalar>& b, const char* op) {
  require(is_suffix_shape(a, b),
          cat(op, ": shape ", shape_str(b.shape()), " does not broadcast over ",
              shape_str(a.shape())));
}

template <typename Scalar>
void check_same_tape(Var<Scalar> a, Var<Scalar> b) {
  require(a.valid() && b.valid() && a.tape == b.tape, "operands must live on one tape");
}

}  // namespace detail

// ---------------------------------------------------------------------------
// elementwise arithmetic (suffix broadcasting on the second operand)
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> add(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  const Tensor<Scalar>& vb = t.value(b.id);
  detail::check_broadcast(va, vb, "add");

  const Index inner = vb.size();
  const Index outer = va.size() / inner;
  Tensor<Scalar> out = va;
  MatMap<Scalar>(out.data(), outer, inner).rowwise() +=
      ConstMatMap<Scalar>(vb.data(), 1, inner).row(0);

  const bool needs = t.needs_grad(a.id) || t.needs_grad(b.id);
  Var<Scalar> y = t.make_node(std::move(out), needs);
  t.set_backward(y.id, [&t, a, b, y, outer, inner]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    if (t.needs_grad(a.id)) t.grad_buffer(a.id).arr() += g.arr();
    if (t.needs_grad(b.id)) {
      MatMap<Scalar>(t.grad_buffer(b.id).data(), 1, inner).row(0) +=
          ConstMatMap<Scalar>(g.data(), outer, inner).colwise().sum();
    }
  });
  return y;
}

template <typename Scalar>
Var<Scalar> sub(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  const Tensor<Scalar>& vb = t.value(b.id);
  detail::check_broadcast(va, vb, "sub");

  const Index inner = vb.size();
  const Index outer = va.size() / inner;
  Tensor<Scalar> out = va;
  MatMap<Scalar>(out.data(), outer, inner).rowwise() -=
      ConstMatMap<Scalar>(vb.data(), 1, inner).row(0);

  const bool needs = t.needs_grad(a.id) || t.needs_grad(b.id);
  Var<Scalar> y = t.make_node(std::move(out), needs);
  t.set_backward(y.id, [&t, a, b, y, outer, inner]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    if (t.needs_grad(a.id)) t.grad_buffer(a.id).arr() += g.arr();
    if (t.needs_grad(b.id)) {
      MatMap<Scalar>(t.grad_buffer(b.id).data(), 1, inner).row(0) -=
          ConstMatMap<Scalar>(g.data(), outer, inner).colwise().sum();
    }
  });
  return y;
}

template <typename Scalar>
Var<Scalar> mul(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  const Tensor<Scalar>& vb = t.value(b.id);
  detail::check_broadcast(va, vb, "mul");

  const Index inner = vb.size();
  const Index outer = va.size() / inner;
  Tensor<Scalar> out = va;
  {
    MatMap<Scalar> om(out.data(), outer, inner);
    ConstMatMap<Scalar> bm(vb.data(), 1, inner);
    om.array().rowwise() *= bm.array().row(0);
  }

  const bool needs = t.needs_grad(a.id) || t.needs_grad(b.id);
  Var<Scalar> y = t.make_node(std::move(out), needs);
  t.set_backward(y.id, [&t, a, b, y, outer, inner]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    ConstMatMap<Scalar> gm(g.data(), outer, inner);
    ConstMatMap<Scalar> am(t.value(a.id).data(), outer, inner);
    ConstMatMap<Scalar> bm(t.value(b.id).data(), 1, inner);
    if (t.needs_grad(a.id)) {
      MatMap<Scalar> da(t.grad_buffer(a.id).data(), outer, inner);
      da.array() += gm.array().rowwise() * bm.array().row(0);
    }
    if (t.needs_grad(b.id)) {
      MatMap<Scalar> db(t.grad_buffer(b.id).data(), 1, inner);
      db.array().row(0) += (gm.array() * am.array()).colwise().sum();
    }
  });
  return y;
}

template <typename Scalar>
Var<Scalar> scale(Var<Scalar> a, Scalar c) {
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out = t.value(a.id);
  out.arr() *= c;
  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y, c]() {
    t.grad_buffer(a.id).arr() += c * t.grad_buffer(y.id).arr();
  });
  return y;
}

template <typename Scalar>
Var<Scalar> neg(Var<Scalar> a) {
  return scale(a, Scalar(-1));
}

template <typename Scalar>
Var<Scalar> add_scalar(Var<Scalar> a, Scalar c) {
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out = t.value(a.id);
  out.arr() += c;
  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y]() { t.grad_buffer(a.id).arr() += t.grad_buffer(y.id).arr(); });
  return y;
}

// Plain elementwise reciprocal; backward reuses the saved output (-y^2 * g).
template <typename Scalar>
Var<Scalar> reciprocal(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out = t.value(a.id);
  out.arr() = out.arr().inverse();

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y]() {
    const auto yv = t.value(y.id).arr();
    t.grad_buffer(a.id).arr() -= t.grad_buffer(y.id).arr() * yv * yv;
  });
  return y;
}

// Reciprocal of the pole-guarded input: 1 / (sgn(x) max(|x|, eps)). Used by
// the literal continued-fraction route; every element costs one counted
// division. Where the guard is active the realized function is constant in x,
// so the gradient there is exactly zero.
template <typename Scalar>
Var<Scalar> guarded_reciprocal(Var<Scalar> a, const PoleGuard& guard) {
  Tape<Scalar>& t = *a.tape;
  const Scalar eps = static_cast<Scalar>(guard.epsilon);
  const Tensor<Scalar>& va = t.value(a.id);
  Tensor<Scalar> out(va.shape());
  for (Index i = 0; i < va.size(); ++i) out[i] = Scalar(1) / guard_denominator(va[i], eps);
  t.count_cf_divisions(va.size());

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y, eps]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    const Tensor<Scalar>& x = t.value(a.id);
    const Tensor<Scalar>& yv = t.value(y.id);
    Tensor<Scalar>& da = t.grad_buffer(a.id);
    for (Index i = 0; i < x.size(); ++i) {
      if (std::abs(x[i]) > eps) da[i] -= g[i] * yv[i] * yv[i];
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// matrix products
// ---------------------------------------------------------------------------

// y[..., n] = a[..., k] * b[k, n] with b shared across all leading axes.
template <typename Scalar>
Var<Scalar> matmul(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  const Tensor<Scalar>& vb = t.value(b.id);
  detail::require(vb.rank() == 2, "matmul: rhs must be rank 2");
  detail::require(va.last_dim() == vb.dim(0),
                  detail::cat("matmul: inner dims differ, ", detail::shape_str(va.shape()),
                              " x ", detail::shape_str(vb.shape())));

  std::vector<Index> out_shape = va.shape();
  out_shape.back() = vb.dim(1);
  Tensor<Scalar> out(out_shape);
  out.as_matrix().noalias() = va.as_matrix() * vb.as_matrix();

  const bool needs = t.needs_grad(a.id) || t.needs_grad(b.id);
  Var<Scalar> y = t.make_node(std::move(out), needs);
  t.set_backward(y.id, [&t, a, b, y]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    const Tensor<Scalar>& va = t.value(a.id);
    const Tensor<Scalar>& vb = t.value(b.id);
    if (t.needs_grad(a.id)) {
      t.grad_buffer(a.id).as_matrix().noalias() += g.as_matrix() * vb.as_matrix().transpose();
    }
    if (t.needs_grad(b.id)) {
      t.grad_buffer(b.id).as_matrix().noalias() += va.as_matrix().transpose() * g.as_matrix();
    }
  });
  return y;
}

// y[..., n] = a[..., k] * b[n, k]^T; the natural layout for row-major weights.
template <typename Scalar>
Var<Scalar> matmul_nt(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  const Tensor<Scalar>& vb = t.value(b.id);
  detail::require(vb.rank() == 2, "matmul_nt: rhs must be rank 2");
  detail::require(va.last_dim() == vb.dim(1),
                  detail::cat("matmul_nt: inner dims differ, ", detail::shape_str(va.shape()),
                              " x ", detail::shape_str(vb.shape()), "^T"));

  std::vector<Index> out_shape = va.shape();
  out_shape.back() = vb.dim(0);
  Tensor<Scalar> out(out_shape);
  out.as_matrix().noalias() = va.as_matrix() * vb.as_matrix().transpose();

  const bool needs = t.needs_grad(a.id) || t.needs_grad(b.id);
  Var<Scalar> y = t.make_node(std::move(out), needs);
  t.set_backward(y.id, [&t, a, b, y]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    const Tensor<Scalar>& va = t.value(a.id);
    const Tensor<Scalar>& vb = t.value(b.id);
    if (t.needs_grad(a.id)) {
      t.grad_buffer(a.id).as_matrix().noalias() += g.as_matrix() * vb.as_matrix();
    }
    if (t.needs_grad(b.id)) {
      t.grad_buffer(b.id).as_matrix().noalias() += g.as_matrix().transpose() * va.as_matrix();
    }
  });
  return y;
}

namespace detail {

template <typename Scalar>
void check_bmm(const Tensor<Scalar>& a, const Tensor<Scalar>& b, bool nt, const char* op) {
  require(a.rank() >= 2 && a.rank() == b.rank(),
          cat(op, ": ranks differ, ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  for (Index i = 0; i + 2 < a.rank(); ++i) {
    require(a.dim(i) == b.dim(i),
            cat(op, ": leading dims differ, ", shape_str(a.shape()), " vs ", shape_str(b.shape())));
  }
  const Index inner_b = nt ? b.cols() : b.rows();
  require(a.cols() == inner_b,
          cat(op, ": inner dims differ, ", shape_str(a.shape()), " x ", shape_str(b.shape())));
}

}  // namespace detail

// Batched y[s] = a[s] * b[s] over matching leading axes.
template <typename Scalar>
Var<Scalar> bmm(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  const Tensor<Scalar>& vb = t.value(b.id);
  detail::check_bmm(va, vb, false, "bmm");

  std::vector<Index> out_shape = va.shape();
  out_shape.back() = vb.cols();
  Tensor<Scalar> out(out_shape);
  const Index batches = va.batch_count();
  for (Index s = 0; s < batches; ++s) {
    out.mat_at(s).noalias() = va.mat_at(s) * vb.mat_at(s);
  }

  const bool needs = t.needs_grad(a.id) || t.needs_grad(b.id);
  Var<Scalar> y = t.make_node(std::move(out), needs);
  t.set_backward(y.id, [&t, a, b, y, batches]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    const Tensor<Scalar>& va = t.value(a.id);
    const Tensor<Scalar>& vb = t.value(b.id);
    for (Index s = 0; s < batches; ++s) {
      if (t.needs_grad(a.id)) {
        t.grad_buffer(a.id).mat_at(s).noalias() += g.mat_at(s) * vb.mat_at(s).transpose();
      }
      if (t.needs_grad(b.id)) {
        t.grad_buffer(b.id).mat_at(s).noalias() += va.mat_at(s).transpose() * g.mat_at(s);
      }
    }
  });
  return y;
}

// Batched y[s] = a[s] * b[s]^T over matching leading axes.
template <typename Scalar>
Var<Scalar> bmm_nt(Var<Scalar> a, Var<Scalar> b) {
  detail::check_same_tape(a, b);
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  const Tensor<Scalar>& vb = t.value(b.id);
  detail::check_bmm(va, vb, true, "bmm_nt");

  std::vector<Index> out_shape = va.shape();
  out_shape.back() = vb.rows();
  Tensor<Scalar> out(out_shape);
  const Index batches = va.batch_count();
  for (Index s = 0; s < batches; ++s) {
    out.mat_at(s).noalias() = va.mat_at(s) * vb.mat_at(s).transpose();
  }

  const bool needs = t.needs_grad(a.id) || t.needs_grad(b.id);
  Var<Scalar> y = t.make_node(std::move(out), needs);
  t.set_backward(y.id, [&t, a, b, y, batches]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    const Tensor<Scalar>& va = t.value(a.id);
    const Tensor<Scalar>& vb = t.value(b.id);
    for (Index s = 0; s < batches; ++s) {
      if (t.needs_grad(a.id)) {
        t.grad_buffer(a.id).mat_at(s).noalias() += g.mat_at(s) * vb.mat_at(s);
      }
      if (t.needs_grad(b.id)) {
        t.grad_buffer(b.id).mat_at(s).noalias() += g.mat_at(s).transpose() * va.mat_at(s);
      }
    }
  });
  return y;
}

// y[..., m, l] = a[..., m, l] * triu(u); gradients to u are masked to the
// upper triangle so below-diagonal entries stay identically zero.
template <typename Scalar>
Var<Scalar> triu_matmul(Var<Scalar> a, Var<Scalar> u) {
  detail::check_same_tape(a, u);
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  const Tensor<Scalar>& vu = t.value(u.id);
  detail::require(vu.rank() == 2 && vu.dim(0) == vu.dim(1), "triu_matmul: u must be square");
  detail::require(va.last_dim() == vu.dim(0),
                  detail::cat("triu_matmul: inner dims differ, ", detail::shape_str(va.shape()),
                              " x ", detail::shape_str(vu.shape())));

  Tensor<Scalar> masked = vu;
  masked.as_matrix() = masked.as_matrix().template triangularView<Eigen::Upper>();

  Tensor<Scalar> out(va.shape());
  out.as_matrix().noalias() = va.as_matrix() * masked.as_matrix();

  const bool needs = t.needs_grad(a.id) || t.needs_grad(u.id);
  Var<Scalar> y = t.make_node(std::move(out), needs);
  t.set_backward(y.id, [&t, a, u, y, masked]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    const Tensor<Scalar>& va = t.value(a.id);
    if (t.needs_grad(a.id)) {
      t.grad_buffer(a.id).as_matrix().noalias() += g.as_matrix() * masked.as_matrix().transpose();
    }
    if (t.needs_grad(u.id)) {
      MatrixRM<Scalar> du = va.as_matrix().transpose() * g.as_matrix();
      t.grad_buffer(u.id).as_matrix() += du.template triangularView<Eigen::Upper>();
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// shape plumbing
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> transpose_last2(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  detail::require(va.rank() >= 2, "transpose_last2: need rank >= 2");

  std::vector<Index> out_shape = va.shape();
  std::swap(out_shape[out_shape.size() - 1], out_shape[out_shape.size() - 2]);
  Tensor<Scalar> out(out_shape);
  const Index batches = va.batch_count();
  for (Index s = 0; s < batches; ++s) out.mat_at(s) = va.mat_at(s).transpose();

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y, batches]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    for (Index s = 0; s < batches; ++s) {
      t.grad_buffer(a.id).mat_at(s) += g.mat_at(s).transpose();
    }
  });
  return y;
}

// Copy of columns [start, start+len) of the last axis.
template <typename Scalar>
Var<Scalar> slice_last(Var<Scalar> a, Index start, Index len) {
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  detail::require(start >= 0 && len >= 1 && start + len <= va.last_dim(),
                  detail::cat("slice_last: [", start, ", ", start + len, ") out of range for ",
                              detail::shape_str(va.shape())));

  std::vector<Index> out_shape = va.shape();
  out_shape.back() = len;
  Tensor<Scalar> out(out_shape);
  out.as_matrix() = va.as_matrix().middleCols(start, len);

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y, start, len]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    t.grad_buffer(a.id).as_matrix().middleCols(start, len) += g.as_matrix();
  });
  return y;
}

// Single index of the last axis, with that axis dropped.
template <typename Scalar>
Var<Scalar> select_last(Var<Scalar> a, Index k) {
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  detail::require(k >= 0 && k < va.last_dim(), "select_last: index out of range");

  Tensor<Scalar> out(va.outer_shape());
  out.arr() = va.as_matrix().col(k).array();

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y, k]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    t.grad_buffer(a.id).as_matrix().col(k).array() += g.arr();
  });
  return y;
}

// Stacks same-shape parts along a fresh trailing axis: n parts of shape
// [...] become [..., n].
template <typename Scalar>
Var<Scalar> stack_last(const std::vector<Var<Scalar>>& parts) {
  detail::require(!parts.empty(), "stack_last: no parts");
  Tape<Scalar>& t = *parts[0].tape;
  const Index n = static_cast<Index>(parts.size());
  const Tensor<Scalar>& first = t.value(parts[0].id);

  bool needs = false;
  for (const auto& p : parts) {
    check_same_shape(first, t.value(p.id), "stack_last");
    needs = needs || t.needs_grad(p.id);
  }

  std::vector<Index> out_shape = first.shape();
  out_shape.push_back(n);
  Tensor<Scalar> out(out_shape);
  for (Index j = 0; j < n; ++j) {
    out.as_matrix().col(j).array() = t.value(parts[static_cast<size_t>(j)].id).arr();
  }

  Var<Scalar> y = t.make_node(std::move(out), needs);
  t.set_backward(y.id, [&t, parts, y, n]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    for (Index j = 0; j < n; ++j) {
      const Var<Scalar> p = parts[static_cast<size_t>(j)];
      if (t.needs_grad(p.id)) t.grad_buffer(p.id).arr() += g.as_matrix().col(j).array();
    }
  });
  return y;
}

// Concatenates along the existing last axis.
template <typename Scalar>
Var<Scalar> concat_last(const std::vector<Var<Scalar>>& parts) {
  detail::require(!parts.empty(), "concat_last: no parts");
  Tape<Scalar>& t = *parts[0].tape;

  Index total = 0;
  bool needs = false;
  const Tensor<Scalar>& first = t.value(parts[0].id);
  for (const auto& p : parts) {
    const Tensor<Scalar>& v = t.value(p.id);
    detail::require(v.rank() == first.rank() && v.outer_size() == first.outer_size(),
                    "concat_last: leading shapes differ");
    total += v.last_dim();
    needs = needs || t.needs_grad(p.id);
  }

  std::vector<Index> out_shape = first.shape();
  out_shape.back() = total;
  Tensor<Scalar> out(out_shape);
  Index at = 0;
  for (const auto& p : parts) {
    const Tensor<Scalar>& v = t.value(p.id);
    out.as_matrix().middleCols(at, v.last_dim()) = v.as_matrix();
    at += v.last_dim();
  }

  Var<Scalar> y = t.make_node(std::move(out), needs);
  t.set_backward(y.id, [&t, parts, y]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    Index at = 0;
    for (const auto& p : parts) {
      const Index w = t.value(p.id).last_dim();
      if (t.needs_grad(p.id)) {
        t.grad_buffer(p.id).as_matrix() += g.as_matrix().middleCols(at, w);
      }
      at += w;
    }
  });
  return y;
}

// [..., p] -> [..., p+1] with a leading column of ones (the bias slot).
template <typename Scalar>
Var<Scalar> augment_ones(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);

  std::vector<Index> out_shape = va.shape();
  out_shape.back() += 1;
  Tensor<Scalar> out(out_shape);
  out.as_matrix().col(0).setOnes();
  out.as_matrix().rightCols(va.last_dim()) = va.as_matrix();

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    const Index p = t.value(a.id).last_dim();
    t.grad_buffer(a.id).as_matrix() += g.as_matrix().rightCols(p);
  });
  return y;
}

// Top-left [n, n] block of a rank-2 matrix.
template <typename Scalar>
Var<Scalar> topleft_block(Var<Scalar> a, Index n) {
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  detail::require(va.rank() == 2, "topleft_block: need rank 2");
  detail::require(n >= 1 && n <= va.rows() && n <= va.cols(),
                  detail::cat("topleft_block: size ", n, " out of range for ",
                              detail::shape_str(va.shape())));
  if (n == va.rows() && n == va.cols()) return a;

  Tensor<Scalar> out({n, n});
  out.as_matrix() = va.as_matrix().topLeftCorner(n, n);

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y, n]() {
    t.grad_buffer(a.id).as_matrix().topLeftCorner(n, n) += t.grad_buffer(y.id).as_matrix();
  });
  return y;
}

// ---------------------------------------------------------------------------
// nonlinearities
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> sigmoid(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Tensor<Scalar> out = t.value(a.id);
  out.arr() = Scalar(1) / (Scalar(1) + (-out.arr()).exp());

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y]() {
    const auto s = t.value(y.id).arr();
    t.grad_buffer(a.id).arr() += t.grad_buffer(y.id).arr() * s * (Scalar(1) - s);
  });
  return y;
}

template <typename Scalar>
Var<Scalar> silu(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  Tensor<Scalar> sig(va.shape());
  sig.arr() = Scalar(1) / (Scalar(1) + (-va.arr()).exp());
  Tensor<Scalar> out(va.shape());
  out.arr() = va.arr() * sig.arr();

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y, sig]() {
    const auto x = t.value(a.id).arr();
    const auto s = sig.arr();
    t.grad_buffer(a.id).arr() +=
        t.grad_buffer(y.id).arr() * s * (Scalar(1) + x * (Scalar(1) - s));
  });
  return y;
}

// tanh-approximation GELU, as used by GPT-style baselines.
template <typename Scalar>
Var<Scalar> gelu(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  const Scalar c = static_cast<Scalar>(0.7978845608028654);  // sqrt(2/pi)
  const Scalar k = static_cast<Scalar>(0.044715);
  const Tensor<Scalar>& va = t.value(a.id);
  Tensor<Scalar> out(va.shape());
  {
    const auto x = va.arr();
    out.arr() = Scalar(0.5) * x * (Scalar(1) + (c * (x + k * x.cube())).tanh());
  }

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y, c, k]() {
    const auto x = t.value(a.id).arr();
    const auto th = (c * (x + k * x.cube())).tanh();
    t.grad_buffer(a.id).arr() +=
        t.grad_buffer(y.id).arr() *
        (Scalar(0.5) * (Scalar(1) + th) +
         Scalar(0.5) * x * (Scalar(1) - th.square()) * c * (Scalar(1) + Scalar(3) * k * x.square()));
  });
  return y;
}

// Layer normalization over the last axis with learned gain and bias.
template <typename Scalar>
Var<Scalar> layer_norm(Var<Scalar> x, Var<Scalar> gain, Var<Scalar> bias) {
  detail::check_same_tape(x, gain);
  detail::check_same_tape(x, bias);
  Tape<Scalar>& t = *x.tape;
  const Scalar ln_eps = static_cast<Scalar>(1e-5);
  const Tensor<Scalar>& vx = t.value(x.id);
  const Tensor<Scalar>& vg = t.value(gain.id);
  const Tensor<Scalar>& vb = t.value(bias.id);
  const Index p = vx.last_dim();
  detail::require(vg.size() == p && vb.size() == p, "layer_norm: gain/bias must match last axis");

  const Index n = vx.outer_size();
  Tensor<Scalar> xhat(vx.shape());
  Tensor<Scalar> inv_std({n});
  Tensor<Scalar> out(vx.shape());
  {
    ConstMatMap<Scalar> xm(vx.data(), n, p);
    MatMap<Scalar> hm(xhat.data(), n, p);
    MatMap<Scalar> om(out.data(), n, p);
    for (Index r = 0; r < n; ++r) {
      const Scalar mean = xm.row(r).mean();
      const Scalar var = (xm.row(r).array() - mean).square().mean();
      const Scalar is = Scalar(1) / std::sqrt(var + ln_eps);
      inv_std[r] = is;
      hm.row(r).array() = (xm.row(r).array() - mean) * is;
      om.row(r).array() = hm.row(r).array() * vg.arr().transpose() + vb.arr().transpose();
    }
  }

  const bool needs = t.needs_grad(x.id) || t.needs_grad(gain.id) || t.needs_grad(bias.id);
  Var<Scalar> y = t.make_node(std::move(out), needs);
  t.set_backward(y.id, [&t, x, gain, bias, y, xhat, inv_std, n, p]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    ConstMatMap<Scalar> gm(g.data(), n, p);
    ConstMatMap<Scalar> hm(xhat.data(), n, p);
    const auto gain_v = t.value(gain.id).arr();

    if (t.needs_grad(gain.id)) {
      MatMap<Scalar> dg(t.grad_buffer(gain.id).data(), 1, p);
      dg.array().row(0) += (gm.array() * hm.array()).colwise().sum();
    }
    if (t.needs_grad(bias.id)) {
      MatMap<Scalar> db(t.grad_buffer(bias.id).data(), 1, p);
      db.array().row(0) += gm.array().colwise().sum();
    }
    if (t.needs_grad(x.id)) {
      MatMap<Scalar> dx(t.grad_buffer(x.id).data(), n, p);
      for (Index r = 0; r < n; ++r) {
        const auto dxhat = gm.row(r).array() * gain_v.transpose();
        const Scalar sum_dxhat = dxhat.sum();
        const Scalar sum_dxhat_xhat = (dxhat * hm.row(r).array()).sum();
        dx.row(r).array() += inv_std[r] / static_cast<Scalar>(p) *
                             (static_cast<Scalar>(p) * dxhat - sum_dxhat -
                              hm.row(r).array() * sum_dxhat_xhat);
      }
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// sequence-model ops
// ---------------------------------------------------------------------------

// Row lookup: out[leading..., :] = table[ids[leading...], :].
template <typename Scalar>
Var<Scalar> embedding(Var<Scalar> table, const std::vector<int>& ids,
                      std::vector<Index> id_shape) {
  Tape<Scalar>& t = *table.tape;
  const Tensor<Scalar>& vt = t.value(table.id);
  detail::require(vt.rank() == 2, "embedding: table must be rank 2");
  detail::require(Tensor<Scalar>::numel(id_shape) == static_cast<Index>(ids.size()),
                  "embedding: id shape does not match id count");
  const Index vocab = vt.dim(0);
  const Index width = vt.dim(1);
  for (const int id : ids) {
    detail::require(id >= 0 && id < vocab, detail::cat("embedding: id ", id, " out of range [0, ", vocab, ")"));
  }

  std::vector<Index> out_shape = std::move(id_shape);
  out_shape.push_back(width);
  Tensor<Scalar> out(out_shape);
  for (size_t i = 0; i < ids.size(); ++i) {
    out.as_matrix().row(static_cast<Index>(i)) = vt.as_matrix().row(ids[i]);
  }

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(table.id));
  t.set_backward(y.id, [&t, table, y, ids]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    Tensor<Scalar>& dt = t.grad_buffer(table.id);
    for (size_t i = 0; i < ids.size(); ++i) {
      dt.as_matrix().row(ids[i]) += g.as_matrix().row(static_cast<Index>(i));
    }
  });
  return y;
}

// Softmax over the causal prefix of each row of the trailing [l, l] square:
// row i is a probability vector over columns 0..i, exactly zero beyond.
template <typename Scalar>
Var<Scalar> causal_softmax(Var<Scalar> scores) {
  Tape<Scalar>& t = *scores.tape;
  const Tensor<Scalar>& vs = t.value(scores.id);
  detail::require(vs.rank() >= 2 && vs.rows() == vs.cols(),
                  detail::cat("causal_softmax: trailing square expected, got ",
                              detail::shape_str(vs.shape())));

  const Index l = vs.rows();
  const Index batches = vs.batch_count();
  Tensor<Scalar> out(vs.shape());
  for (Index s = 0; s < batches; ++s) {
    auto sm = vs.mat_at(s);
    auto om = out.mat_at(s);
    om.setZero();
    for (Index i = 0; i < l; ++i) {
      const Index w = i + 1;
      const Scalar m = sm.row(i).head(w).maxCoeff();
      om.row(i).head(w) = (sm.row(i).head(w).array() - m).exp();
      om.row(i).head(w) /= om.row(i).head(w).sum();
    }
  }

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(scores.id));
  t.set_backward(y.id, [&t, scores, y, l, batches]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    const Tensor<Scalar>& a = t.value(y.id);
    Tensor<Scalar>& ds = t.grad_buffer(scores.id);
    for (Index s = 0; s < batches; ++s) {
      auto gm = g.mat_at(s);
      auto am = a.mat_at(s);
      auto dm = ds.mat_at(s);
      for (Index i = 0; i < l; ++i) {
        const Index w = i + 1;
        const Scalar dot = (gm.row(i).head(w).array() * am.row(i).head(w).array()).sum();
        dm.row(i).head(w).array() +=
            am.row(i).head(w).array() * (gm.row(i).head(w).array() - dot);
      }
    }
  });
  return y;
}

// Mean next-token cross entropy. logits [..., vocab] against one target id
// per leading position.
template <typename Scalar>
Var<Scalar> cross_entropy_mean(Var<Scalar> logits, const std::vector<int>& targets) {
  Tape<Scalar>& t = *logits.tape;
  const Tensor<Scalar>& vl = t.value(logits.id);
  const Index n = vl.outer_size();
  const Index vocab = vl.last_dim();
  detail::require(static_cast<Index>(targets.size()) == n,
                  detail::cat("cross_entropy: ", targets.size(), " targets for ", n, " rows"));
  for (const int id : targets) {
    detail::require(id >= 0 && id < vocab, "cross_entropy: target id out of range");
  }

  Tensor<Scalar> probs(vl.shape());
  Scalar nll = Scalar(0);
  {
    ConstMatMap<Scalar> lm(vl.data(), n, vocab);
    MatMap<Scalar> pm(probs.data(), n, vocab);
    for (Index r = 0; r < n; ++r) {
      const Scalar m = lm.row(r).maxCoeff();
      pm.row(r).array() = (lm.row(r).array() - m).exp();
      const Scalar z = pm.row(r).sum();
      pm.row(r) /= z;
      nll -= lm(r, targets[static_cast<size_t>(r)]) - m - std::log(z);
    }
  }

  Var<Scalar> y = t.make_node(Tensor<Scalar>::scalar(nll / static_cast<Scalar>(n)),
                              t.needs_grad(logits.id));
  t.set_backward(y.id, [&t, logits, y, probs, targets, n, vocab]() {
    const Scalar up = t.grad_buffer(y.id)[0] / static_cast<Scalar>(n);
    Tensor<Scalar>& dl = t.grad_buffer(logits.id);
    MatMap<Scalar> dm(dl.data(), n, vocab);
    ConstMatMap<Scalar> pm(probs.data(), n, vocab);
    for (Index r = 0; r < n; ++r) {
      dm.row(r).array() += up * pm.row(r).array();
      dm(r, targets[static_cast<size_t>(r)]) -= up;
    }
  });
  return y;
}

// Per-channel clamp of the last axis to [lo_j, hi_j]. The bounds are plain
// tensors (tracker state), not differentiable inputs; gradient passes through
// only where the input was strictly inside its bounds.
template <typename Scalar>
Var<Scalar> clamp_channels(Var<Scalar> a, const Tensor<Scalar>& lo, const Tensor<Scalar>& hi) {
  Tape<Scalar>& t = *a.tape;
  const Tensor<Scalar>& va = t.value(a.id);
  const Index c = va.last_dim();
  detail::require(lo.size() == c && hi.size() == c, "clamp_channels: bound size mismatch");

  const Index outer = va.outer_size();
  Tensor<Scalar> out = va;
  {
    MatMap<Scalar> om(out.data(), outer, c);
    for (Index j = 0; j < c; ++j) {
      om.col(j) = om.col(j).array().min(hi[j]).max(lo[j]);
    }
  }

  Var<Scalar> y = t.make_node(std::move(out), t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y, lo, hi, outer, c]() {
    const Tensor<Scalar>& g = t.grad_buffer(y.id);
    const Tensor<Scalar>& x = t.value(a.id);
    Tensor<Scalar>& da = t.grad_buffer(a.id);
    ConstMatMap<Scalar> gm(g.data(), outer, c);
    ConstMatMap<Scalar> xm(x.data(), outer, c);
    MatMap<Scalar> dm(da.data(), outer, c);
    for (Index j = 0; j < c; ++j) {
      dm.col(j).array() +=
          gm.col(j).array() *
          ((xm.col(j).array() >= lo[j]) && (xm.col(j).array() <= hi[j])).template cast<Scalar>();
    }
  });
  return y;
}

// ---------------------------------------------------------------------------
// reductions
// ---------------------------------------------------------------------------

template <typename Scalar>
Var<Scalar> sum(Var<Scalar> a) {
  Tape<Scalar>& t = *a.tape;
  Var<Scalar> y = t.make_node(Tensor<Scalar>::scalar(t.value(a.id).arr().sum()),
                              t.needs_grad(a.id));
  t.set_backward(y.id, [&t, a, y]() {
    t.grad_buffer(a.id).arr() += t.grad_buffer(y.id)[0];
  });
  return y;
}

template <typename Scalar>
Var<Scalar> mean(Var<Scalar> a) {
  const Index n = a.value().size();
  return scale(sum(a), Scalar(1) / static_cast<Scalar>(n));
}

}  // namespace cfnet
