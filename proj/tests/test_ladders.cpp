#include <doctest.h>

#include <vector>

#include "cfnet/continued_fraction.hpp"
#include "cfnet/ladder_ensemble.hpp"
#include "support/finite_diff.hpp"

using namespace cfnet;
using cfnet::testing::rel_err;

namespace {

LadderConfig make_cfg(Index p, Index q, Index L, Index d) {
  LadderConfig cfg;
  cfg.p = p;
  cfg.q = q;
  cfg.ladders = L;
  cfg.depth = d;
  return cfg;
}

// Scalar reference: one sample through the ensemble using cf_literal per
// ladder, no tensors involved.
double ensemble_reference(LadderEnsemble<double>& ens, const std::vector<double>& x, Index out_i) {
  const LadderConfig& cfg = ens.config();
  std::vector<double> xa;
  if (cfg.bias) xa.push_back(1.0);
  xa.insert(xa.end(), x.begin(), x.end());

  double y = 0.0;
  for (size_t c = 0; c < xa.size(); ++c) {
    y += ens.u().as_matrix()(out_i, static_cast<Index>(c)) * xa[c];
  }
  for (Index j = 0; j < cfg.ladders; ++j) {
    std::vector<double> a(static_cast<size_t>(cfg.depth));
    for (Index k = 0; k < cfg.depth; ++k) {
      double dot = 0.0;
      for (size_t c = 0; c < xa.size(); ++c) {
        dot += ens.w()[static_cast<size_t>(k)].as_matrix()(j, static_cast<Index>(c)) * xa[c];
      }
      a[static_cast<size_t>(k)] = dot;
    }
    const double zj = cf_literal<double>({a.data(), a.size()}, 0.0, cfg.guard);
    y += ens.v().as_matrix()(out_i, j) * zj;
  }
  return y;
}

Tensor<double> run_forward(LadderEnsemble<double>& ens, const Tensor<double>& x,
                           bool requires_grad = false) {
  Tape<double> t;
  ParamBinder<double> bind(t, requires_grad);
  return ens.forward(bind, t.constant(x)).value();
}

}  // namespace

TEST_CASE("zero combiner reduces to the direct linear path") {
  Rng rng(42);
  LadderEnsemble<double> ens(make_cfg(3, 2, 2, 3), rng);
  ens.v().set_zero();

  Tensor<double> x({4, 3});
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  const Tensor<double> y = run_forward(ens, x);

  for (Index b = 0; b < 4; ++b) {
    for (Index i = 0; i < 2; ++i) {
      double expect = ens.u().as_matrix()(i, 0);  // bias column times leading 1
      for (Index c = 0; c < 3; ++c) expect += ens.u().as_matrix()(i, c + 1) * x[b * 3 + c];
      CHECK(y[b * 2 + i] == doctest::Approx(expect).epsilon(1e-14));
    }
  }
}

TEST_CASE("single minimal ladder: y = 1/(w x)") {
  Rng rng(1);
  LadderEnsemble<double> ens(make_cfg(1, 1, 1, 1), rng);
  ens.u().set_zero();
  ens.v() = Tensor<double>({1, 1}, {1.0});
  ens.w()[0] = Tensor<double>({1, 2}, {0.0, 1.0});  // bias 0, weight 1

  const Tensor<double> y = run_forward(ens, Tensor<double>({1, 1}, {2.0}));
  CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("ensemble matches the loop-of-scalars reference") {
  Rng rng(7);
  for (int inst = 0; inst < 20; ++inst) {
    const Index p = 1 + static_cast<Index>(rng.below(4));
    const Index q = 1 + static_cast<Index>(rng.below(4));
    const Index L = 1 + static_cast<Index>(rng.below(4));
    const Index d = 1 + static_cast<Index>(rng.below(4));
    LadderEnsemble<double> ens(make_cfg(p, q, L, d), rng);

    Tensor<double> x({5, p});
    for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
    const Tensor<double> y = run_forward(ens, x);

    for (Index b = 0; b < 5; ++b) {
      std::vector<double> xv(static_cast<size_t>(p));
      for (Index c = 0; c < p; ++c) xv[static_cast<size_t>(c)] = x[b * p + c];
      for (Index i = 0; i < q; ++i) {
        const double ref = ensemble_reference(ens, xv, i);
        CHECK(std::abs(y[b * q + i] - ref) <= 1e-10 * (1.0 + std::abs(ref)));
      }
    }
  }
}

TEST_CASE("ensemble forward works over higher-rank batches") {
  Rng rng(11);
  LadderEnsemble<double> ens(make_cfg(3, 2, 2, 2), rng);
  Tensor<double> x({2, 4, 3});
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  const Tensor<double> y = run_forward(ens, x);
  CHECK(y.shape() == std::vector<Index>{2, 4, 2});

  Tensor<double> flat_x({8, 3});
  flat_x.arr() = x.arr();
  const Tensor<double> y_flat = run_forward(ens, flat_x);
  for (Index i = 0; i < y.size(); ++i) CHECK(y[i] == y_flat[i]);
}

TEST_CASE("range tracker") {
  SUBCASE("running extrema") {
    RangeTracker<double> tr(1);
    tr.observe(Tensor<double>({1, 1}, {1.0}));
    tr.observe(Tensor<double>({1, 1}, {-2.0}));
    CHECK(tr.lo()[0] == -2.0);
    CHECK(tr.hi()[0] == 1.0);
  }
  SUBCASE("single observation pins both ends") {
    RangeTracker<double> tr(1);
    tr.observe(Tensor<double>({1, 1}, {0.3}));
    CHECK(tr.lo()[0] == 0.3);
    CHECK(tr.hi()[0] == 0.3);
  }
  SUBCASE("matches exhaustive extrema over random batches") {
    Rng rng(3);
    RangeTracker<double> tr(4);
    std::vector<double> lo(4, 1e300), hi(4, -1e300);
    for (int rep = 0; rep < 100; ++rep) {
      Tensor<double> z({25, 4});
      for (Index i = 0; i < z.size(); ++i) z[i] = rng.uniform(-5.0, 5.0);
      tr.observe(z);
      for (Index r = 0; r < 25; ++r) {
        for (Index j = 0; j < 4; ++j) {
          lo[static_cast<size_t>(j)] = std::min(lo[static_cast<size_t>(j)], z[r * 4 + j]);
          hi[static_cast<size_t>(j)] = std::max(hi[static_cast<size_t>(j)], z[r * 4 + j]);
        }
      }
    }
    CHECK(tr.observed_count() == 2500);
    for (Index j = 0; j < 4; ++j) {
      CHECK(tr.lo()[j] == lo[static_cast<size_t>(j)]);
      CHECK(tr.hi()[j] == hi[static_cast<size_t>(j)]);
    }
  }
  SUBCASE("observing in clipping mode is rejected") {
    RangeTracker<double> tr(1);
    tr.set_mode(RangeTracker<double>::Mode::Clipping);
    CHECK_THROWS_AS(tr.observe(Tensor<double>({1, 1}, {0.0})), Error);
  }
}

TEST_CASE("clipping bounds ladder outputs, recording leaves them alone") {
  Rng rng(5);
  // V = identity exposes z directly in y (U = 0), so the clamp is observable.
  LadderEnsemble<double> ens(make_cfg(2, 3, 3, 2), rng);
  ens.u().set_zero();
  ens.v().set_zero();
  for (Index j = 0; j < 3; ++j) ens.v().as_matrix()(j, j) = 1.0;

  Tensor<double> x_train({64, 2});
  for (Index i = 0; i < x_train.size(); ++i) x_train[i] = rng.uniform(-0.5, 0.5);
  const Tensor<double> y_rec = run_forward(ens, x_train);

  // Recording never altered z: re-running in clipping mode on the same data
  // stays within bounds and reproduces the values.
  ens.tracker().set_mode(RangeTracker<double>::Mode::Clipping);
  const Tensor<double> y_clip_same = run_forward(ens, x_train);
  for (Index i = 0; i < y_rec.size(); ++i) CHECK(y_rec[i] == y_clip_same[i]);

  // Far out-of-distribution inputs: every ladder output must stay in range.
  Tensor<double> x_ood({256, 2});
  for (Index i = 0; i < x_ood.size(); ++i) x_ood[i] = rng.uniform(-50.0, 50.0);
  const Tensor<double> y_ood = run_forward(ens, x_ood);
  for (Index r = 0; r < 256; ++r) {
    for (Index j = 0; j < 3; ++j) {
      CHECK(y_ood[r * 3 + j] >= ens.tracker().lo()[j] - 1e-12);
      CHECK(y_ood[r * 3 + j] <= ens.tracker().hi()[j] + 1e-12);
    }
  }
}

TEST_CASE("bias column of U has unit gradient per sample") {
  Rng rng(9);
  LadderEnsemble<double> ens(make_cfg(3, 2, 2, 2), rng);
  ParamRegistry<double> reg;
  ens.collect_params(reg, "l");

  Tape<double> t;
  ParamBinder<double> bind(t, true);
  Tensor<double> x({6, 3});
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  auto y = ens.forward(bind, t.constant(x));
  t.backward(sum(select_last(y, 0)));  // sum of output component 0 over the batch

  const auto& du = t.grad(bind.bound_var(ens.u()));
  CHECK(du.as_matrix()(0, 0) == doctest::Approx(6.0).epsilon(1e-12));  // one per sample
  CHECK(du.as_matrix()(1, 0) == 0.0);
}

TEST_CASE("full-parameter finite-difference check") {
  Rng rng(13);
  LadderEnsemble<double> ens(make_cfg(3, 2, 2, 3), rng);
  ParamRegistry<double> reg;
  ens.collect_params(reg, "l");

  Tensor<double> x({4, 3});
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  const Tensor<double> proj = Tensor<double>::randn({4, 2}, rng);

  auto loss_value = [&]() {
    Tape<double> t;
    ParamBinder<double> bind(t, false);
    auto y = ens.forward(bind, t.constant(x));
    return sum(mul(y, t.constant(proj))).value()[0];
  };

  // Analytic gradients.
  Tape<double> t;
  ParamBinder<double> bind(t, true);
  auto y = ens.forward(bind, t.constant(x));
  t.backward(sum(mul(y, t.constant(proj))));

  double worst = 0.0;
  for (const auto& param : reg.all()) {
    const auto& analytic = t.grad(bind.bound_var(*param.tensor));
    for (Index e = 0; e < param.tensor->size(); ++e) {
      const double orig = (*param.tensor)[e];
      const double h = 1e-6;
      (*param.tensor)[e] = orig + h;
      const double up = loss_value();
      (*param.tensor)[e] = orig - h;
      const double down = loss_value();
      (*param.tensor)[e] = orig;
      worst = std::max(worst, rel_err(analytic[e], (up - down) / (2 * h), 1e-6));
    }
  }
  CHECK(worst < 1e-5);
}

TEST_CASE("shape mismatch is rejected with both shapes") {
  Rng rng(17);
  LadderEnsemble<double> ens(make_cfg(3, 2, 2, 2), rng);
  Tape<double> t;
  ParamBinder<double> bind(t, false);
  CHECK_THROWS_WITH_AS(ens.forward(bind, t.constant(Tensor<double>::zeros({4, 5}))),
                       doctest::Contains("[4, 5]"), Error);
}
