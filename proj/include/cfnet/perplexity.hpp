#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <span>
#include <vector>

#include "cfnet/model.hpp"

namespace cfnet {

// Strided sliding-window scoring. A window feeds `window` input tokens
// through the model; its logits score the targets shifted by one. The first
// window scores all its targets, each following window advances by `stride`
// and scores only the targets not covered before, and the last window is
// clamped to the end of the text so every target is scored exactly once with
// the longest context available. Shorter strides buy longer scoring context
// for more compute; text shorter than a window becomes one short window.
//
// `Model` needs forward(binder, ids, batch, l) -> logits Var. Tracker modes
// are the caller's business.
template <typename Scalar, typename Model>
double perplexity_nll(Model& model, std::span<const std::uint8_t> text, Index stride,
                      Index window) {
  detail::require(text.size() >= 2, "perplexity: need at least two tokens");
  detail::require(window >= 1, "perplexity: window must be >= 1");
  detail::require(stride >= 1 && stride <= window,
                  detail::cat("perplexity: stride ", stride, " must be in [1, ", window, "]"));

  const Index total = static_cast<Index>(text.size());
  const Index last_start = total - 1 > window ? total - 1 - window : 0;
  double nll = 0.0;
  Index scored = 0;

  Index begin = 0;
  Index first_target = 1;  // lowest text index not yet scored
  while (true) {
    const Index len = std::min<Index>(window, total - 1 - begin);
    const Index window_end = begin + len;  // targets in window: begin+1 .. window_end

    std::vector<int> inputs(static_cast<size_t>(len));
    for (Index i = 0; i < len; ++i) inputs[static_cast<size_t>(i)] = text[begin + i];

    Tape<Scalar> tape;
    ParamBinder<Scalar> bind(tape, false);
    const Tensor<Scalar>& logits = model.forward(bind, inputs, 1, len).value();
    const Index vocab = logits.last_dim();
    ConstMatMap<Scalar> lm(logits.data(), len, vocab);

    for (Index target = first_target; target <= window_end; ++target) {
      const Index pos = target - begin - 1;  // logits row predicting `target`
      const Scalar m = lm.row(pos).maxCoeff();
      const Scalar lse = m + std::log((lm.row(pos).array() - m).exp().sum());
      nll += static_cast<double>(lse - lm(pos, static_cast<Index>(text[target])));
      ++scored;
    }

    first_target = window_end + 1;
    if (first_target >= total) break;
    begin = std::min<Index>({begin + stride, last_start, first_target - 1});
  }
  return nll / static_cast<double>(scored);
}

template <typename Scalar, typename Model>
double evaluate_perplexity(Model& model, std::span<const std::uint8_t> text, Index stride,
                           Index window) {
  return std::exp(perplexity_nll<Scalar>(model, text, stride, window));
}

}  // namespace cfnet
