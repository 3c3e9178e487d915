#include <doctest.h>

#include <cmath>
#include <span>
#include <vector>

#include "cfnet/continued_fraction.hpp"
#include "cfnet/rng.hpp"
#include "support/finite_diff.hpp"

using namespace cfnet;
using cfnet::testing::central_differences;
using cfnet::testing::rel_err;

namespace {

std::span<const double> sp(const std::vector<double>& v) { return {v.data(), v.size()}; }

// Generic determinant by minor expansion along the first column. Exponential,
// used only for k <= 8; independent of both the recursion and the LU route.
double laplace_det(const std::vector<std::vector<double>>& m) {
  const size_t n = m.size();
  if (n == 1) return m[0][0];
  double det = 0.0;
  for (size_t i = 0; i < n; ++i) {
    if (m[i][0] == 0.0) continue;
    std::vector<std::vector<double>> minor;
    minor.reserve(n - 1);
    for (size_t r = 0; r < n; ++r) {
      if (r == i) continue;
      std::vector<double> row(m[r].begin() + 1, m[r].end());
      minor.push_back(std::move(row));
    }
    const double sign = (i % 2 == 0) ? 1.0 : -1.0;
    det += sign * m[i][0] * laplace_det(minor);
  }
  return det;
}

std::vector<std::vector<double>> tridiag_matrix(const std::vector<double>& a) {
  const size_t k = a.size();
  std::vector<std::vector<double>> m(k, std::vector<double>(k, 0.0));
  for (size_t i = 0; i < k; ++i) {
    m[i][i] = a[i];
    if (i + 1 < k) {
      m[i][i + 1] = 1.0;
      m[i + 1][i] = -1.0;
    }
  }
  return m;
}

double draw_entry(Rng& rng, bool mixed_signs) {
  const double mag = rng.uniform(0.5, 3.0);
  if (!mixed_signs) return mag;
  return rng.next_u64() & 1 ? mag : -mag;
}

}  // namespace

TEST_CASE("continuant tables match the recursion examples") {
  const PoleGuard guard;

  auto t1 = continuants_forward<double>(sp({2.0, 3.0}), guard);
  CHECK(t1.k[0] == 1.0);
  CHECK(t1.k[1] == 3.0);
  CHECK(t1.k[2] == 7.0);

  auto t2 = continuants_forward<double>(sp({1.0, 1.0, 1.0, 1.0}), guard);
  const std::vector<double> fib = {1, 1, 2, 3, 5};
  for (int j = 0; j <= 4; ++j) CHECK(t2.k[j] == fib[j]);

  auto t3 = continuants_forward<double>(sp({4.0}), guard);
  CHECK(t3.k[0] == 1.0);
  CHECK(t3.k[1] == 4.0);
}

TEST_CASE("continuants_forward input validation") {
  const PoleGuard guard;
  CHECK_THROWS_AS(continuants_forward<double>(sp({}), guard), Error);
  std::vector<double> bad = {1.0, std::nan(""), 2.0};
  CHECK_THROWS_WITH_AS(continuants_forward<double>(sp(bad), guard),
                       doctest::Contains("entry 1"), Error);
  std::vector<double> inf = {1.0, 2.0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_WITH_AS(continuants_forward<double>(sp(inf), guard),
                       doctest::Contains("entry 2"), Error);
  PoleGuard bad_guard;
  bad_guard.epsilon = 0.0;
  CHECK_THROWS_AS(continuants_forward<double>(sp({1.0}), bad_guard), Error);
}

TEST_CASE("cf_eval matches hand values and the literal oracle") {
  const PoleGuard guard;

  auto t1 = continuants_forward<double>(sp({1.0, 1.0}), guard);
  CHECK(cf_eval(t1, 0.0) == doctest::Approx(0.5).epsilon(1e-15));

  auto t2 = continuants_forward<double>(sp({2.0, 3.0}), guard);
  const double oracle = cf_literal<double>(sp({2.0, 3.0}), 0.0, guard);
  CHECK(cf_eval(t2, 0.0) == doctest::Approx(3.0 / 7.0).epsilon(1e-15));
  CHECK(cf_eval(t2, 0.0) == doctest::Approx(oracle).epsilon(1e-13));

  auto t3 = continuants_forward<double>(sp({1.0, 1.0, 1.0, 1.0}), guard);
  CHECK(cf_eval(t3, 2.0) == doctest::Approx(2.6).epsilon(1e-15));
}

TEST_CASE("cf_literal hand values and division counting") {
  const PoleGuard guard;
  long divisions = 0;
  CHECK(cf_literal<double>(sp({1.0, 1.0}), 0.0, guard, &divisions) == doctest::Approx(0.5));
  CHECK(divisions == 2);

  divisions = 0;
  CHECK(cf_literal<double>(sp({2.0, 3.0}), 0.0, guard, &divisions) ==
        doctest::Approx(3.0 / 7.0).epsilon(1e-15));
  CHECK(divisions == 2);

  divisions = 0;
  std::vector<double> a7(7, 1.25);
  cf_literal<double>(sp(a7), 0.5, guard, &divisions);
  CHECK(divisions == 7);
}

TEST_CASE("continuant/literal equivalence away from poles") {
  const PoleGuard guard;
  Rng rng(2024);
  for (int trial = 0; trial < 2000; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(7));
    std::vector<double> a(d);
    for (auto& v : a) v = draw_entry(rng, true);

    // Only compare where every literal intermediate stays clear of the guard.
    bool pole_free = true;
    double tail = a[d - 1];
    for (int i = d - 2; i >= 0 && pole_free; --i) {
      if (std::abs(tail) <= 10 * guard.epsilon) pole_free = false;
      tail = a[i] + 1.0 / tail;
    }
    if (std::abs(tail) <= 10 * guard.epsilon) pole_free = false;
    if (!pole_free) continue;

    auto table = continuants_forward<double>(sp(a), guard);
    const double via_ratio = cf_eval(table, 0.7);
    const double via_literal = cf_literal<double>(sp(a), 0.7, guard);
    CHECK(std::abs(via_ratio - via_literal) <= 1e-10 * (1.0 + std::abs(via_ratio)));
  }
}

TEST_CASE("analytic gradient equals frozen values and finite differences") {
  const PoleGuard guard;

  auto t1 = continuants_forward<double>(sp({2.0, 3.0}), guard);
  auto g1 = cf_grad(t1);
  CHECK(g1[0] == doctest::Approx(-9.0 / 49.0).epsilon(1e-14));
  CHECK(g1[1] == doctest::Approx(1.0 / 49.0).epsilon(1e-14));

  auto t2 = continuants_forward<double>(sp({1.0, 1.0, 1.0, 1.0}), guard);
  auto g2 = cf_grad(t2);
  const std::vector<double> expect2 = {-0.36, 0.16, -0.04, 0.04};
  for (int i = 0; i < 4; ++i) CHECK(g2[i] == doctest::Approx(expect2[i]).epsilon(1e-13));

  auto t3 = continuants_forward<double>(sp({4.0}), guard);
  CHECK(cf_grad(t3)[0] == doctest::Approx(-1.0 / 16.0).epsilon(1e-14));

  // Cross-check the frozen values against the literal-evaluation oracle.
  for (const auto& a : {std::vector<double>{2.0, 3.0}, std::vector<double>{1.0, 1.0, 1.0, 1.0}}) {
    auto fd = central_differences(
        [&](const std::vector<double>& x) { return cf_literal<double>(sp(x), 0.0, guard); }, a);
    auto table = continuants_forward<double>(sp(a), guard);
    auto grad = cf_grad(table);
    for (size_t i = 0; i < a.size(); ++i) CHECK(rel_err(grad[i], fd[i]) < 1e-7);
  }
}

TEST_CASE("gradient sign alternation") {
  Rng rng(7);
  const PoleGuard guard;
  for (int trial = 0; trial < 500; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(7));
    std::vector<double> a(d);
    for (auto& v : a) v = draw_entry(rng, false);  // positive keeps K_j > 0
    auto table = continuants_forward<double>(sp(a), guard);
    auto grad = cf_grad(table);
    for (int k = 1; k <= d; ++k) {
      if (table.k[d - k] == 0.0) continue;
      CHECK(((k % 2 == 0) ? grad[k - 1] > 0 : grad[k - 1] < 0));
    }
  }
}

TEST_CASE("recursion consistency on random draws") {
  Rng rng(99);
  const PoleGuard guard;
  for (int trial = 0; trial < 500; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(8));
    std::vector<double> a(d);
    for (auto& v : a) v = draw_entry(rng, true);
    auto table = continuants_forward<double>(sp(a), guard);
    CHECK(table.k[0] == 1.0);
    CHECK(table.k[1] == a[d - 1]);
    for (int j = 2; j <= d; ++j) {
      const double expect = a[d - j] * table.k[j - 1] + table.k[j - 2];
      CHECK(rel_err(table.k[j], expect, 1e-12) < 1e-12);
    }
    CHECK(std::abs(table.kd_guarded) >= guard.epsilon);
    CHECK(table.inv_kd * table.kd_guarded == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(table.divisions_used == 1);
  }
}

TEST_CASE("guard_denominator") {
  CHECK(guard_denominator(0.001, 0.01) == 0.01);
  CHECK(guard_denominator(-0.005, 0.01) == -0.01);
  CHECK(guard_denominator(5.0, 0.01) == 5.0);
  CHECK(guard_denominator(-5.0, 0.01) == -5.0);
  CHECK(guard_denominator(0.0, 0.01) == 0.01);   // sgn(0) := +1
  CHECK(guard_denominator(-0.0, 0.01) == 0.01);
}

TEST_CASE("continuant_partial against hand values and finite differences") {
  CHECK(continuant_partial<double>(sp({2.0, 3.0}), 1) == 3.0);
  CHECK(continuant_partial<double>(sp({2.0, 3.0}), 2) == 2.0);
  CHECK(continuant_partial<double>(sp({1.0, 1.0, 1.0}), 2) == 1.0);
  CHECK_THROWS_AS(continuant_partial<double>(sp({1.0, 2.0}), 0), Error);
  CHECK_THROWS_AS(continuant_partial<double>(sp({1.0, 2.0}), 3), Error);

  Rng rng(11);
  for (int trial = 0; trial < 200; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(6));
    std::vector<double> a(k);
    for (auto& v : a) v = draw_entry(rng, true);
    for (int l = 1; l <= k; ++l) {
      auto fd = central_differences(
          [&](const std::vector<double>& x) {
            std::vector<std::vector<double>> m = tridiag_matrix(x);
            return laplace_det(m);
          },
          a);
      CHECK(rel_err(continuant_partial<double>(sp(a), l), fd[l - 1], 1e-6) < 1e-5);
    }
  }
}

TEST_CASE("product identity residual") {
  // k = 1, a0 = 1, a = (2, 3): 1*7 - 1*10 + 3 = 0.
  CHECK(check_continuant_identity<double>(sp({1.0, 2.0, 3.0}), 1) == 0.0);

  Rng rng(13);
  for (int trial = 0; trial < 1000; ++trial) {
    const int d = 1 + static_cast<int>(rng.below(8));
    std::vector<double> a(d + 1);
    for (auto& v : a) v = draw_entry(rng, true);
    double scale = 1.0;
    {
      const double kd = std::abs(continuant<double>(sp(a).subspan(1)));
      const double kdp1 = std::abs(continuant<double>(sp(a)));
      scale = std::max({scale, kd * kd, kdp1});
    }
    for (int k = 0; k <= d; ++k) {
      const double residual = check_continuant_identity<double>(sp(a), k);
      if (k == 0) {
        CHECK(residual == 0.0);  // exact: reduces to K_d - K_d
      } else {
        CHECK(std::abs(residual) <= 1e-9 * scale);
      }
    }
  }
}

TEST_CASE("tridiagonal determinant equals the continuant") {
  CHECK(tridiagonal_determinant<double>(sp({2.0, 3.0})) == doctest::Approx(7.0).epsilon(1e-14));
  CHECK(tridiagonal_determinant<double>(sp({4.0})) == doctest::Approx(4.0).epsilon(1e-15));
  CHECK(tridiagonal_determinant<double>(sp({1.0, 1.0, 1.0, 1.0, 1.0})) ==
        doctest::Approx(8.0).epsilon(1e-13));  // Fibonacci F_6
  // Laplace-expansion oracle for the same instance.
  CHECK(laplace_det(tridiag_matrix({1, 1, 1, 1, 1})) == doctest::Approx(8.0).epsilon(1e-13));

  Rng rng(17);
  for (int trial = 0; trial < 300; ++trial) {
    const int k = 1 + static_cast<int>(rng.below(8));
    std::vector<double> a(k);
    for (auto& v : a) v = draw_entry(rng, true);
    const double via_det = tridiagonal_determinant<double>(sp(a));
    const double via_rec = continuant<double>(sp(a));
    CHECK(rel_err(via_det, via_rec, 1e-10) < 1e-10);
  }
}

TEST_CASE("continuant overflow guard") {
  std::vector<double> huge(7, 1e60);
  CHECK_THROWS_WITH_AS(continuant<double>(sp(huge)), doctest::Contains("1e100"), Error);
}

TEST_CASE("float32 instantiation") {
  const PoleGuard guard;
  std::vector<float> a = {2.0f, 3.0f};
  auto table = continuants_forward<float>({a.data(), a.size()}, guard);
  CHECK(table.k[2] == 7.0f);
  CHECK(cf_eval(table, 0.0f) == doctest::Approx(3.0f / 7.0f));
  auto grad = cf_grad(table);
  CHECK(grad[0] == doctest::Approx(-9.0f / 49.0f));
}
