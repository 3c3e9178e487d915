#include <doctest.h>

#include <vector>

#include "cfnet/cf_layer.hpp"
#include "cfnet/rng.hpp"
#include "support/tensor_gradcheck.hpp"

using namespace cfnet;
using cfnet::testing::max_grad_error;

namespace {
const PoleGuard kGuard;
}

TEST_CASE("cf_layer forward examples") {
  Tape<double> t;
  SUBCASE("two rows of depth 2") {
    auto a = t.constant(Tensor<double>({2, 2}, {1.0, 1.0, 2.0, 3.0}));
    auto y = cf_layer(a, kGuard);
    CHECK(y.value()[0] == doctest::Approx(0.5).epsilon(1e-15));
    CHECK(y.value()[1] == doctest::Approx(3.0 / 7.0).epsilon(1e-15));
  }
  SUBCASE("all-ones depth 4 gives the Fibonacci ratio") {
    auto a = t.constant(Tensor<double>::full({1, 4}, 1.0));
    auto y = cf_layer(a, kGuard);
    CHECK(y.value()[0] == doctest::Approx(0.6).epsilon(1e-15));
  }
  SUBCASE("non-finite input rejected") {
    Tensor<double> bad({1, 2}, {1.0, 0.0});
    bad[1] = std::numeric_limits<double>::quiet_NaN();
    auto a = t.constant(bad);
    CHECK_THROWS_WITH_AS(cf_layer(a, kGuard), doctest::Contains("element 1"), Error);
  }
}

TEST_CASE("cf_layer matches the scalar path elementwise") {
  Rng rng(321);
  Tape<double> t;
  Tensor<double> a({8, 16, 3});
  for (Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(0.5, 3.0);
  auto y = cf_layer(t.constant(a), kGuard);
  REQUIRE(y.shape() == std::vector<Index>{8, 16});
  for (Index r = 0; r < 8 * 16; ++r) {
    std::vector<double> row = {a[r * 3], a[r * 3 + 1], a[r * 3 + 2]};
    auto table = continuants_forward<double>({row.data(), row.size()}, kGuard);
    CHECK(y.value()[r] == cf_eval(table, 0.0));  // identical arithmetic, bit equal
  }
}

TEST_CASE("cf_layer backward values") {
  SUBCASE("unit upstream reproduces the analytic gradient") {
    Tape<double> t;
    auto a = t.leaf(Tensor<double>({1, 2}, {2.0, 3.0}), true);
    t.backward(sum(cf_layer(a, kGuard)));
    CHECK(t.grad(a)[0] == doctest::Approx(-9.0 / 49.0).epsilon(1e-14));
    CHECK(t.grad(a)[1] == doctest::Approx(1.0 / 49.0).epsilon(1e-14));
  }
  SUBCASE("zero upstream gives zero gradient") {
    Tape<double> t;
    auto a = t.leaf(Tensor<double>({1, 3}, {1.0, 2.0, 3.0}), true);
    t.backward(sum(scale(cf_layer(a, kGuard), 0.0)));
    for (int i = 0; i < 3; ++i) CHECK(t.grad(a)[i] == 0.0);
  }
  SUBCASE("upstream scales linearly") {
    Tape<double> t;
    auto a = t.leaf(Tensor<double>({1, 1}, {4.0}), true);
    t.backward(sum(scale(cf_layer(a, kGuard), 2.0)));
    CHECK(t.grad(a)[0] == doctest::Approx(-2.0 / 16.0).epsilon(1e-14));
  }
}

TEST_CASE("cf_layer gradcheck over depths") {
  for (Index d : {1, 3, 5, 7}) {
    Rng rng(1000 + static_cast<unsigned>(d));
    Tensor<double> a({4, d});
    for (Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(0.5, 3.0);
    const double err = max_grad_error({a}, [](Tape<double>&, const auto& v) {
      return cf_layer(v[0], kGuard);
    });
    CHECK(err < 1e-5);
  }
}

TEST_CASE("division accounting: one per element forward, none backward") {
  Tape<double> t;
  Rng rng(5);
  Tensor<double> a({32, 7});
  for (Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(0.5, 3.0);
  auto leaf = t.leaf(a, true);
  auto y = cf_layer(leaf, kGuard);
  CHECK(t.cf_divisions() == 32);
  auto loss = sum(y);
  const long long before_backward = t.cf_divisions();
  t.backward(loss);
  CHECK(t.cf_divisions() == before_backward);  // backward reuses saved reciprocals
}

TEST_CASE("literal chain: d divisions per element and equal values off-pole") {
  Rng rng(6);
  Tensor<double> a({16, 5});
  for (Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(0.5, 3.0);

  Tape<double> t1;
  auto y1 = cf_layer(t1.constant(a), kGuard);
  CHECK(t1.cf_divisions() == 16);

  Tape<double> t2;
  auto y2 = cf_literal_chain(t2.constant(a), kGuard);
  CHECK(t2.cf_divisions() == 16 * 5);

  for (Index i = 0; i < 16; ++i) {
    CHECK(std::abs(y1.value()[i] - y2.value()[i]) <= 1e-12);
  }
}

TEST_CASE("literal chain gradcheck") {
  Rng rng(8);
  Tensor<double> a({4, 4});
  for (Index i = 0; i < a.size(); ++i) a[i] = rng.uniform(0.5, 3.0);
  CHECK(max_grad_error({a}, [](Tape<double>&, const auto& v) {
          return cf_literal_chain(v[0], kGuard);
        }) < 1e-6);
}
