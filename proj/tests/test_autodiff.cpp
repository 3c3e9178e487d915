#include <doctest.h>

#include <vector>

#include "cfnet/ops.hpp"
#include "cfnet/rng.hpp"
#include "support/tensor_gradcheck.hpp"

using namespace cfnet;
using cfnet::testing::max_grad_error;

namespace {

Tensor<double> randn(std::vector<Index> shape, unsigned seed) {
  Rng rng(seed);
  return Tensor<double>::randn(std::move(shape), rng);
}

}  // namespace

TEST_CASE("backward basics") {
  SUBCASE("sum of squares") {
    Tape<double> t;
    auto x = t.leaf(Tensor<double>({3}, {1.0, 2.0, 3.0}), true);
    auto loss = sum(mul(x, x));
    t.backward(loss);
    CHECK(loss.value()[0] == 14.0);
    const auto& g = t.grad(x);
    CHECK(g[0] == 2.0);
    CHECK(g[1] == 4.0);
    CHECK(g[2] == 6.0);
  }
  SUBCASE("identity matmul") {
    Tape<double> t;
    Tensor<double> eye({3, 3});
    for (int i = 0; i < 3; ++i) eye[i * 3 + i] = 1.0;
    auto x = t.leaf(Tensor<double>({3, 1}, {4.0, 5.0, 6.0}), true);
    auto loss = sum(matmul(t.constant(eye), x));
    t.backward(loss);
    for (int i = 0; i < 3; ++i) CHECK(t.grad(x)[i] == 1.0);
  }
  SUBCASE("detached tensors get no gradient flow") {
    Tape<double> t;
    auto x = t.leaf(Tensor<double>({2}, {1.0, 2.0}), false);
    auto y = mul(x, x);
    CHECK_FALSE(t.needs_grad(y.id));
  }
  SUBCASE("loss must be scalar") {
    Tape<double> t;
    auto x = t.leaf(Tensor<double>({2}, {1.0, 2.0}), true);
    CHECK_THROWS_AS(t.backward(x), Error);
  }
}

TEST_CASE("primitive gradients match finite differences") {
  SUBCASE("add broadcast") {
    CHECK(max_grad_error({randn({2, 3, 4}, 1), randn({4}, 2)}, [](Tape<double>&, const auto& v) {
            return add(v[0], v[1]);
          }) < 1e-7);
  }
  SUBCASE("sub broadcast") {
    CHECK(max_grad_error({randn({2, 3, 4}, 3), randn({3, 4}, 4)}, [](Tape<double>&, const auto& v) {
            return sub(v[0], v[1]);
          }) < 1e-6);
  }
  SUBCASE("mul broadcast") {
    CHECK(max_grad_error({randn({2, 3, 4}, 5), randn({4}, 6)}, [](Tape<double>&, const auto& v) {
            return mul(v[0], v[1]);
          }) < 1e-7);
  }
  SUBCASE("scale and add_scalar") {
    CHECK(max_grad_error({randn({5}, 7)}, [](Tape<double>&, const auto& v) {
            return add_scalar(scale(v[0], 2.5), -1.0);
          }) < 1e-7);
  }
  SUBCASE("reciprocal") {
    Tensor<double> x = randn({6}, 8);
    x.arr() = x.arr().abs() + 1.0;
    CHECK(max_grad_error({x}, [](Tape<double>&, const auto& v) { return reciprocal(v[0]); }) <
          1e-6);
  }
  SUBCASE("matmul") {
    CHECK(max_grad_error({randn({2, 3, 4}, 9), randn({4, 5}, 10)},
                         [](Tape<double>&, const auto& v) { return matmul(v[0], v[1]); }) < 1e-6);
  }
  SUBCASE("matmul_nt") {
    CHECK(max_grad_error({randn({2, 3, 4}, 11), randn({5, 4}, 12)},
                         [](Tape<double>&, const auto& v) { return matmul_nt(v[0], v[1]); }) <
          1e-6);
  }
  SUBCASE("bmm") {
    CHECK(max_grad_error({randn({2, 3, 4}, 13), randn({2, 4, 5}, 14)},
                         [](Tape<double>&, const auto& v) { return bmm(v[0], v[1]); }) < 1e-6);
  }
  SUBCASE("bmm_nt") {
    CHECK(max_grad_error({randn({2, 3, 4}, 15), randn({2, 5, 4}, 16)},
                         [](Tape<double>&, const auto& v) { return bmm_nt(v[0], v[1]); }) < 1e-6);
  }
  SUBCASE("triu_matmul") {
    CHECK(max_grad_error({randn({2, 3, 4}, 17), randn({4, 4}, 18)},
                         [](Tape<double>&, const auto& v) { return triu_matmul(v[0], v[1]); }) <
          1e-6);
  }
  SUBCASE("transpose_last2") {
    CHECK(max_grad_error({randn({2, 3, 4}, 19)}, [](Tape<double>&, const auto& v) {
            return transpose_last2(v[0]);
          }) < 1e-7);
  }
  SUBCASE("slice, select, stack, concat, augment") {
    CHECK(max_grad_error({randn({3, 6}, 20)}, [](Tape<double>&, const auto& v) {
            auto s = slice_last(v[0], 1, 3);
            auto picked = stack_last<double>({select_last(v[0], 4), select_last(v[0], 5)});
            auto c = concat_last<double>({s, slice_last(v[0], 0, 1), picked});
            return augment_ones(c);
          }) < 1e-7);
  }
  SUBCASE("sigmoid silu gelu") {
    CHECK(max_grad_error({randn({7}, 21)}, [](Tape<double>&, const auto& v) {
            return sigmoid(silu(gelu(v[0])));
          }) < 1e-6);
  }
  SUBCASE("layer_norm") {
    CHECK(max_grad_error({randn({4, 6}, 22), randn({6}, 23), randn({6}, 24)},
                         [](Tape<double>&, const auto& v) {
                           return layer_norm(v[0], v[1], v[2]);
                         }) < 1e-5);
  }
  SUBCASE("embedding") {
    const std::vector<int> ids = {2, 0, 1, 2};
    CHECK(max_grad_error({randn({3, 5}, 25)}, [ids](Tape<double>&, const auto& v) {
            return embedding(v[0], ids, {4});
          }) < 1e-7);
  }
  SUBCASE("causal_softmax") {
    CHECK(max_grad_error({randn({2, 4, 4}, 26)}, [](Tape<double>&, const auto& v) {
            return causal_softmax(v[0]);
          }) < 1e-6);
  }
  SUBCASE("cross_entropy_mean") {
    const std::vector<int> targets = {1, 3, 0, 2, 2, 1};
    CHECK(max_grad_error({randn({6, 4}, 27)}, [targets](Tape<double>&, const auto& v) {
            return cross_entropy_mean(v[0], targets);
          }) < 1e-6);
  }
  SUBCASE("clamp_channels inside bounds passes gradient") {
    Tensor<double> lo = Tensor<double>::full({3}, -10.0);
    Tensor<double> hi = Tensor<double>::full({3}, 10.0);
    CHECK(max_grad_error({randn({4, 3}, 28)}, [lo, hi](Tape<double>&, const auto& v) {
            return clamp_channels(v[0], lo, hi);
          }) < 1e-7);
  }
}

TEST_CASE("clamp_channels clips and zeroes gradient outside bounds") {
  Tape<double> t;
  auto x = t.leaf(Tensor<double>({2, 2}, {-5.0, 0.5, 3.0, -0.25}), true);
  Tensor<double> lo({2}, {-1.0, -1.0});
  Tensor<double> hi({2}, {1.0, 1.0});
  auto y = clamp_channels(x, lo, hi);
  CHECK(y.value()[0] == -1.0);
  CHECK(y.value()[1] == 0.5);
  CHECK(y.value()[2] == 1.0);
  CHECK(y.value()[3] == -0.25);
  t.backward(sum(y));
  CHECK(t.grad(x)[0] == 0.0);
  CHECK(t.grad(x)[1] == 1.0);
  CHECK(t.grad(x)[2] == 0.0);
  CHECK(t.grad(x)[3] == 1.0);
}

TEST_CASE("causal softmax rows") {
  Tape<double> t;
  auto s = t.constant(Tensor<double>::zeros({4, 4}));
  auto a = causal_softmax(s);
  const auto& v = a.value();
  // row 0: only self; row 2: uniform over first three; above-diagonal zero
  CHECK(v[0] == 1.0);
  CHECK(v[1] == 0.0);
  for (int j = 0; j < 3; ++j) CHECK(v[2 * 4 + j] == doctest::Approx(1.0 / 3.0));
  CHECK(v[2 * 4 + 3] == 0.0);
  for (int i = 0; i < 4; ++i) {
    double row = 0.0;
    for (int j = 0; j < 4; ++j) {
      if (j > i) CHECK(v[i * 4 + j] == 0.0);
      row += v[i * 4 + j];
    }
    CHECK(row == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("cross entropy of uniform logits is log vocab") {
  Tape<double> t;
  auto logits = t.constant(Tensor<double>::zeros({5, 65}));
  auto loss = cross_entropy_mean(logits, {0, 7, 64, 13, 2});
  CHECK(loss.value()[0] == doctest::Approx(std::log(65.0)).epsilon(1e-12));
}

TEST_CASE("tape replay determinism") {
  auto run = []() {
    Rng rng(777);
    Tape<double> t;
    auto x = t.leaf(Tensor<double>::randn({4, 4}, rng), true);
    auto w = t.leaf(Tensor<double>::randn({4, 4}, rng), true);
    auto loss = sum(mul(matmul(x, w), matmul(x, w)));
    t.backward(loss);
    std::vector<double> out;
    for (Index i = 0; i < 16; ++i) out.push_back(t.grad(x)[i]);
    for (Index i = 0; i < 16; ++i) out.push_back(t.grad(w)[i]);
    return out;
  };
  const auto a = run();
  const auto b = run();
  for (size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);  // bit-identical
}

TEST_CASE("shape errors carry both shapes") {
  Tape<double> t;
  auto a = t.constant(Tensor<double>::zeros({2, 3}));
  auto b = t.constant(Tensor<double>::zeros({2, 2}));
  CHECK_THROWS_WITH_AS(add(a, b), doctest::Contains("[2, 2]"), Error);
  CHECK_THROWS_WITH_AS(matmul(a, b), doctest::Contains("[2, 3]"), Error);
}
