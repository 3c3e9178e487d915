#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "cfnet/model.hpp"

namespace cfnet {

// Autoregressive byte sampling. Temperature 0 is greedy argmax (ties break
// toward the lowest id); otherwise ids are drawn from softmax(logits / T).
// The caller chooses the tracker mode; inference normally clips.
template <typename Scalar>
std::vector<std::uint8_t> generate(CausalLM<Scalar>& model, std::span<const std::uint8_t> prompt,
                                   Index n_tokens, double temperature, Rng& rng) {
  detail::require(n_tokens >= 0, "generate: n_tokens must be >= 0");
  detail::require(temperature >= 0.0, "generate: temperature must be >= 0");
  std::vector<std::uint8_t> out(prompt.begin(), prompt.end());
  if (n_tokens == 0) return out;
  detail::require(!out.empty(), "generate: prompt must be non-empty when sampling tokens");

  const Index l_max = model.config().block.l_max;
  const Index vocab = model.config().vocab;
  for (Index step = 0; step < n_tokens; ++step) {
    const Index ctx_len = std::min<Index>(static_cast<Index>(out.size()), l_max);
    std::vector<int> ids(static_cast<size_t>(ctx_len));
    for (Index i = 0; i < ctx_len; ++i) {
      ids[static_cast<size_t>(i)] = out[out.size() - static_cast<size_t>(ctx_len - i)];
    }

    Tape<Scalar> tape;
    ParamBinder<Scalar> bind(tape, false);
    const Tensor<Scalar>& logits = model.forward(bind, ids, 1, ctx_len).value();
    ConstMatMap<Scalar> lm(logits.data(), ctx_len, vocab);
    const auto row = lm.row(ctx_len - 1);

    int picked = 0;
    if (temperature == 0.0) {
      Scalar best = row(0);
      for (Index v = 1; v < vocab; ++v) {
        if (row(v) > best) {
          best = row(v);
          picked = static_cast<int>(v);
        }
      }
    } else {
      const Scalar m = row.maxCoeff();
      ArrayX<Scalar> probs =
          ((row.array() - m) / static_cast<Scalar>(temperature)).exp().transpose();
      probs /= probs.sum();
      const double draw = rng.uniform();
      double acc = 0.0;
      picked = static_cast<int>(vocab - 1);
      for (Index v = 0; v < vocab; ++v) {
        acc += static_cast<double>(probs(v));
        if (draw < acc) {
          picked = static_cast<int>(v);
          break;
        }
      }
    }
    out.push_back(static_cast<std::uint8_t>(picked));
  }
  return out;
}

}  // namespace cfnet
