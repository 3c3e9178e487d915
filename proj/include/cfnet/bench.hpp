#pragma once

#include <algorithm>
#include <chrono>
#include <string>
#include <vector>

#ifdef __linux__
#include <sched.h>
#endif

#include "cfnet/cf_layer.hpp"
#include "cfnet/rng.hpp"

namespace cfnet {

struct BenchArm {
  std::string name;
  double median_us = 0.0;          // forward + backward per repetition
  long long divisions_forward = 0; // continued-fraction divisions per forward
  long long divisions_backward = 0;
};

struct BenchReport {
  Index depth = 0;
  Index rows = 0;
  Index ladders = 0;
  int reps = 0;
  BenchArm continuant;
  BenchArm literal;
  double speedup = 0.0;  // literal time / continuant time
  bool continuant_faster = false;
  bool divisions_ok = false;
};

// Pins the process to one CPU for timing stability; no-op off Linux.
inline void pin_to_single_cpu() {
#ifdef __linux__
  cpu_set_t set;
  CPU_ZERO(&set);
  CPU_SET(0, &set);
  sched_setaffinity(0, sizeof(set), &set);
#endif
}

namespace detail {

template <typename Build>
BenchArm time_arm(const std::string& name, const Tensor<double>& input, int warmup, int reps,
                  const Build& build) {
  BenchArm arm;
  arm.name = name;

  std::vector<double> times;
  times.reserve(static_cast<size_t>(reps));
  for (int rep = -warmup; rep < reps; ++rep) {
    Tape<double> tape;
    const auto start = std::chrono::steady_clock::now();
    Var<double> leaf = tape.leaf(input, true);
    Var<double> loss = sum(build(leaf));
    const long long divisions_after_forward = tape.cf_divisions();
    tape.backward(loss);
    const auto stop = std::chrono::steady_clock::now();

    arm.divisions_forward = divisions_after_forward;
    arm.divisions_backward = tape.cf_divisions() - divisions_after_forward;
    if (rep >= 0) {
      times.push_back(std::chrono::duration<double, std::micro>(stop - start).count());
    }
  }
  std::sort(times.begin(), times.end());
  arm.median_us = times[times.size() / 2];
  return arm;
}

}  // namespace detail

// Times the continuant route (one division per fraction, analytic backward)
// against the literal layer-by-layer route (d divisions per fraction,
// backprop through the division chain) at identical shapes.
inline BenchReport run_cf_benchmark(Index depth, Index rows, Index ladders, int reps, int warmup,
                                    std::uint64_t seed, const PoleGuard& guard = PoleGuard{}) {
  detail::require(depth >= 1 && rows >= 1 && ladders >= 1 && reps >= 1,
                  "benchmark: depth, rows, ladders, reps must be >= 1");
  BenchReport report;
  report.depth = depth;
  report.rows = rows;
  report.ladders = ladders;
  report.reps = reps;

  Rng rng(seed);
  Tensor<double> input({rows, ladders, depth});
  for (Index i = 0; i < input.size(); ++i) input[i] = rng.uniform(0.5, 3.0);

  report.continuant = detail::time_arm(
      "continuant", input, warmup, reps,
      [&guard](Var<double> a) { return cf_layer(a, guard); });
  report.literal = detail::time_arm(
      "literal", input, warmup, reps,
      [&guard](Var<double> a) { return cf_literal_chain(a, guard); });

  const long long evaluations = rows * ladders;
  report.divisions_ok = report.continuant.divisions_forward == evaluations &&
                        report.continuant.divisions_backward == 0 &&
                        report.literal.divisions_forward == depth * evaluations;
  report.speedup = report.literal.median_us / report.continuant.median_us;
  report.continuant_faster = report.continuant.median_us < report.literal.median_us;
  return report;
}

}  // namespace cfnet
