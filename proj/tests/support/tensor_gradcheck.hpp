#pragma once

// Finite-difference checking for tape ops. The builder assembles a graph from
// leaf variables; the harness projects the output to a scalar with fixed
// random weights, then compares analytic input gradients against central
// differences computed by rerunning the forward pass only.

#include <functional>
#include <vector>

#include "cfnet/ops.hpp"
#include "cfnet/rng.hpp"
#include "support/finite_diff.hpp"

namespace cfnet::testing {

using BuildFn =
    std::function<Var<double>(Tape<double>&, const std::vector<Var<double>>&)>;

inline double max_grad_error(std::vector<Tensor<double>> inputs, const BuildFn& build,
                             unsigned seed = 12345, double h = 1e-6) {
  Rng rng(seed);
  Tensor<double> weights;  // fixed projection, created on first forward

  auto forward = [&](const std::vector<Tensor<double>>& xs,
                     Tape<double>* keep_tape) -> double {
    Tape<double> local;
    Tape<double>& t = keep_tape ? *keep_tape : local;
    std::vector<Var<double>> leaves;
    leaves.reserve(xs.size());
    for (const auto& x : xs) leaves.push_back(t.leaf(x, true));
    Var<double> out = build(t, leaves);
    if (weights.empty()) weights = Tensor<double>::randn(out.shape(), rng);
    Var<double> loss = sum(mul(out, t.constant(weights)));
    if (keep_tape) t.backward(loss);
    return loss.value()[0];
  };

  // Analytic gradients.
  Tape<double> tape;
  forward(inputs, &tape);
  std::vector<Tensor<double>> analytic;
  for (size_t i = 0; i < inputs.size(); ++i) {
    analytic.push_back(tape.grad(Var<double>{&tape, static_cast<Index>(i)}));
  }

  double worst = 0.0;
  for (size_t i = 0; i < inputs.size(); ++i) {
    for (Index e = 0; e < inputs[i].size(); ++e) {
      const double orig = inputs[i][e];
      inputs[i][e] = orig + h;
      const double up = forward(inputs, nullptr);
      inputs[i][e] = orig - h;
      const double down = forward(inputs, nullptr);
      inputs[i][e] = orig;
      const double fd = (up - down) / (2.0 * h);
      worst = std::max(worst, rel_err(analytic[i][e], fd, 1e-6));
    }
  }
  return worst;
}

}  // namespace cfnet::testing
