#pragma once

#include <memory>
#include <numeric>
#include <vector>

#include "cfnet/blocks.hpp"

namespace cfnet {

struct ModelConfig {
  BlockConfig block;
  Index vocab = 256;
  Index n_layers = 2;

  void validate() const {
    block.validate();
    detail::require(vocab >= 2, "model config: vocab must be >= 2");
    detail::require(n_layers >= 1, "model config: n_layers must be >= 1");
  }
};

// Byte-level causal language model: token + learned positional embeddings,
// a stack of transformer blocks with swappable attention/FFN variants, final
// layer norm, and a linear head. The object is pinned in memory once built;
// the parameter registry points straight at the owned tensors.
template <typename Scalar>
class CausalLM {
 public:
  CausalLM(const ModelConfig& cfg, Rng& rng)
      : cfg_(cfg),
        tok_emb_(Tensor<Scalar>::randn({cfg.vocab, cfg.block.p}, rng, 0.0, 0.02)),
        pos_emb_(Tensor<Scalar>::randn({cfg.block.l_max, cfg.block.p}, rng, 0.0, 0.02)),
        lnf_gain_(Tensor<Scalar>::full({cfg.block.p}, Scalar(1))),
        lnf_bias_({cfg.block.p}),
        head_(Tensor<Scalar>::randn({cfg.block.p, cfg.vocab}, rng, 0.0, 0.02)) {
    cfg_.validate();
    for (Index i = 0; i < cfg.n_layers; ++i) {
      blocks_.push_back(std::make_unique<TransformerBlock<Scalar>>(cfg.block, rng));
    }
    registry_.add("tok_emb", tok_emb_, 0, true);
    registry_.add("pos_emb", pos_emb_, 0, true);
    for (Index i = 0; i < cfg.n_layers; ++i) {
      blocks_[static_cast<size_t>(i)]->collect_params(registry_, detail::cat("blocks.", i));
    }
    registry_.add("ln_f.gain", lnf_gain_, 0, false);
    registry_.add("ln_f.bias", lnf_bias_, 0, false);
    registry_.add("head", head_, 0, true);
  }

  CausalLM(const CausalLM&) = delete;
  CausalLM& operator=(const CausalLM&) = delete;

  const ModelConfig& config() const { return cfg_; }
  ParamRegistry<Scalar>& registry() { return registry_; }

  // ids: row-major [batch, l] token ids -> logits [batch, l, vocab].
  Var<Scalar> forward(ParamBinder<Scalar>& bind, const std::vector<int>& ids, Index batch,
                      Index l) {
    detail::require(l >= 1 && l <= cfg_.block.l_max,
                    detail::cat("forward: sequence length ", l, " outside [1, ",
                                cfg_.block.l_max, "]"));
    detail::require(static_cast<Index>(ids.size()) == batch * l,
                    "forward: id count does not match batch * l");
    Tape<Scalar>& t = bind.tape();

    Var<Scalar> x = embedding(bind(tok_emb_), ids, {batch, l});
    std::vector<int> positions(static_cast<size_t>(l));
    std::iota(positions.begin(), positions.end(), 0);
    x = add(x, embedding(bind(pos_emb_), positions, {l}));

    for (auto& block : blocks_) x = block->forward(bind, x);
    x = layer_norm(x, bind(lnf_gain_), bind(lnf_bias_));
    (void)t;
    return matmul(x, bind(head_));
  }

  // Mean next-token cross entropy of a batch.
  Var<Scalar> loss(ParamBinder<Scalar>& bind, const std::vector<int>& inputs,
                   const std::vector<int>& targets, Index batch, Index l) {
    return cross_entropy_mean(forward(bind, inputs, batch, l), targets);
  }

  void set_tracker_mode(typename RangeTracker<Scalar>::Mode m) {
    for (auto& block : blocks_) block->set_tracker_mode(m);
  }

  void visit_trackers(const TrackerVisitor<Scalar>& fn) {
    for (size_t i = 0; i < blocks_.size(); ++i) {
      blocks_[i]->visit_trackers(detail::cat("blocks.", i), fn);
    }
  }

  TransformerBlock<Scalar>& block(Index i) { return *blocks_[static_cast<size_t>(i)]; }

 private:
  ModelConfig cfg_;
  Tensor<Scalar> tok_emb_, pos_emb_;
  std::vector<std::unique_ptr<TransformerBlock<Scalar>>> blocks_;
  Tensor<Scalar> lnf_gain_, lnf_bias_;
  Tensor<Scalar> head_;
  ParamRegistry<Scalar> registry_;
};

}  // namespace cfnet
