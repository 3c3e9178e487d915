#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "cfnet/cf_layer.hpp"
#include "cfnet/continued_fraction.hpp"
#include "cfnet/ladder_ensemble.hpp"
#include "cfnet/rng.hpp"

// Check harnesses shared by the gradcheck/identities CLI commands and the
// acceptance suite. Each returns a small report; callers decide how to print
// and which exit code to use.

namespace cfnet {

struct CheckReport {
  std::string name;
  double worst = 0.0;     // worst observed error for the sweep
  double bound = 0.0;     // the bound it must stay under
  long long trials = 0;
  bool passed() const { return worst <= bound; }
};

namespace detail {

// Draw partial denominators with magnitudes in [0.5, 3], optionally
// sign-mixed, rejecting draws too close to a pole for central differences at
// h = 1e-6 to be trustworthy. The two rejection bounds measure exactly what
// limits the difference quotient: the log-derivative |dK_d/da_k| / |K_d|
// bounds the truncation term (the function's curvature scale), and the
// gradient entries (K_{d-k}/K_d)^2 must clear the h-scaled roundoff floor.
// The literal intermediates must also stay off their guards so both
// evaluation routes realize the same smooth function.
inline std::vector<double> draw_pole_free(Rng& rng, int d, bool mixed, const PoleGuard& guard) {
  std::vector<double> a(static_cast<size_t>(d));
  for (int attempt = 0; attempt < 100000; ++attempt) {
    for (auto& v : a) {
      v = rng.uniform(0.5, 3.0);
      if (mixed && (rng.next_u64() & 1)) v = -v;
    }
    const std::span<const double> sp{a.data(), a.size()};
    const auto table = continuants_forward<double>(sp, guard);
    const double kd = std::abs(table.k[d]);

    bool ok = kd > 10 * guard.epsilon;
    const double f_scale = 1.0 + std::abs(table.k[d - 1] / table.k[d]);
    for (Index k = 1; k <= d && ok; ++k) {
      if (std::abs(continuant_partial<double>(sp, k)) > 300.0 * kd) ok = false;
      const double ratio = table.k[d - k] / table.k[d];
      if (ratio * ratio < 1e-4 * f_scale) ok = false;
    }
    double tail = a[static_cast<size_t>(d) - 1];
    for (int i = d - 2; i >= 0 && ok; --i) {
      if (std::abs(tail) <= 10 * guard.epsilon) ok = false;
      tail = a[static_cast<size_t>(i)] + 1.0 / tail;
    }
    if (std::abs(tail) <= 10 * guard.epsilon) ok = false;
    if (ok) return a;
  }
  throw Error("pole-free draw: rejection did not terminate");
}

inline double rel_error(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace detail

// Analytic continued-fraction gradients against central finite differences
// of the literal evaluation, h = 1e-6, over pole-free draws.
inline CheckReport check_cf_gradients(int depth, long long draws, std::uint64_t seed,
                                      const PoleGuard& guard = PoleGuard{},
                                      bool corrupt_sign = false) {
  CheckReport report{detail::cat("cf gradients d=", depth), 0.0, 1e-5, draws};
  Rng rng(seed);
  const double h = 1e-6;
  for (long long trial = 0; trial < draws; ++trial) {
    const bool mixed = trial % 2 == 1;
    std::vector<double> a = detail::draw_pole_free(rng, depth, mixed, guard);
    const auto table = continuants_forward<double>({a.data(), a.size()}, guard);
    auto grad = cf_grad(table);
    if (corrupt_sign) grad[0] = -grad[0];  // deliberate mutation for harness self-tests

    for (int k = 0; k < depth; ++k) {
      const double orig = a[static_cast<size_t>(k)];
      a[static_cast<size_t>(k)] = orig + h;
      const double up = cf_literal<double>({a.data(), a.size()}, 0.0, guard);
      a[static_cast<size_t>(k)] = orig - h;
      const double down = cf_literal<double>({a.data(), a.size()}, 0.0, guard);
      a[static_cast<size_t>(k)] = orig;
      report.worst = std::max(report.worst, detail::rel_error(grad[k], (up - down) / (2 * h)));
    }
  }
  return report;
}

// Lemma-style product identity: residual relative to the largest continuant
// magnitude involved, all 0 <= k <= d, d up to max_depth.
inline CheckReport check_continuant_identities(int max_depth, long long draws,
                                               std::uint64_t seed) {
  CheckReport report{detail::cat("continuant identity d<=", max_depth), 0.0, 1e-9, draws};
  Rng rng(seed);
  for (long long trial = 0; trial < draws; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_depth)));
    std::vector<double> a(static_cast<size_t>(d) + 1);
    for (auto& v : a) {
      v = rng.uniform(0.5, 3.0);
      if (rng.next_u64() & 1) v = -v;
    }
    const std::span<const double> sp{a.data(), a.size()};
    double scale = 1.0;
    scale = std::max(scale, std::abs(continuant<double>(sp.subspan(1))));
    scale = std::max(scale, std::abs(continuant<double>(sp)));
    scale = scale * scale;
    for (int k = 0; k <= d; ++k) {
      const double residual = std::abs(check_continuant_identity<double>(sp, k));
      report.worst = std::max(report.worst, residual / scale);
    }
  }
  return report;
}

// Tridiagonal determinant (LU route) against the recursion, k <= max_order.
inline CheckReport check_determinant_form(int max_order, long long draws, std::uint64_t seed) {
  CheckReport report{detail::cat("tridiagonal determinant k<=", max_order), 0.0, 1e-10, draws};
  Rng rng(seed);
  for (long long trial = 0; trial < draws; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(static_cast<std::uint64_t>(max_order)));
    std::vector<double> a(static_cast<size_t>(k));
    for (auto& v : a) {
      v = rng.uniform(0.5, 3.0);
      if (rng.next_u64() & 1) v = -v;
    }
    const double via_det = tridiagonal_determinant<double>({a.data(), a.size()});
    const double via_rec = continuant<double>({a.data(), a.size()});
    report.worst =
        std::max(report.worst, std::abs(via_det - via_rec) /
                                   std::max({std::abs(via_rec), std::abs(via_det), 1e-10}));
  }
  return report;
}

// Ratio-form vs literal evaluation agreement plus division accounting on
// pole-free draws.
inline CheckReport check_route_equivalence(int depth, long long draws, std::uint64_t seed,
                                           const PoleGuard& guard = PoleGuard{}) {
  CheckReport report{detail::cat("continuant/literal equivalence d=", depth), 0.0, 1e-10, draws};
  Rng rng(seed);
  for (long long trial = 0; trial < draws; ++trial) {
    std::vector<double> a = detail::draw_pole_free(rng, depth, trial % 2 == 1, guard);
    const auto table = continuants_forward<double>({a.data(), a.size()}, guard);
    detail::require(table.divisions_used == 1, "route equivalence: ratio route must divide once");
    long literal_divisions = 0;
    const double a0 = rng.uniform(-1.0, 1.0);
    const double via_ratio = cf_eval(table, a0);
    const double via_literal = cf_literal<double>({a.data(), a.size()}, a0, guard,
                                                  &literal_divisions);
    detail::require(literal_divisions == depth,
                    "route equivalence: literal route must divide d times");
    report.worst = std::max(report.worst,
                            std::abs(via_ratio - via_literal) / (1.0 + std::abs(via_ratio)));
  }
  return report;
}

// Full-module finite differences: every parameter of a small ladder ensemble.
inline CheckReport check_ensemble_gradients(std::uint64_t seed) {
  CheckReport report{"ladder ensemble gradients", 0.0, 1e-5, 1};
  Rng rng(seed);
  LadderConfig cfg;
  cfg.p = 3;
  cfg.q = 2;
  cfg.ladders = 2;
  cfg.depth = 3;
  LadderEnsemble<double> ensemble(cfg, rng);
  ParamRegistry<double> registry;
  ensemble.collect_params(registry, "ensemble");

  Tensor<double> x({4, 3});
  for (Index i = 0; i < x.size(); ++i) x[i] = rng.uniform(-1.0, 1.0);
  const Tensor<double> proj = Tensor<double>::randn({4, 2}, rng);

  auto loss_value = [&]() {
    Tape<double> t;
    ParamBinder<double> bind(t, false);
    return sum(mul(ensemble.forward(bind, t.constant(x)), t.constant(proj))).value()[0];
  };

  Tape<double> tape;
  ParamBinder<double> bind(tape, true);
  tape.backward(sum(mul(ensemble.forward(bind, tape.constant(x)), tape.constant(proj))));

  const double h = 1e-6;
  for (const auto& param : registry.all()) {
    const auto& analytic = tape.grad(bind.bound_var(*param.tensor));
    for (Index e = 0; e < param.tensor->size(); ++e) {
      const double orig = (*param.tensor)[e];
      (*param.tensor)[e] = orig + h;
      const double up = loss_value();
      (*param.tensor)[e] = orig - h;
      const double down = loss_value();
      (*param.tensor)[e] = orig;
      report.worst = std::max(report.worst, detail::rel_error(analytic[e], (up - down) / (2 * h)));
      ++report.trials;
    }
  }
  return report;
}

}  // namespace cfnet
