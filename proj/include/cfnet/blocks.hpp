#pragma once

#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "cfnet/ladder_ensemble.hpp"

namespace cfnet {

enum class AttentionVariant { Baseline, CAttnU, CAttnM };
enum class FfnVariant { Baseline, Cffn };

struct BlockConfig {
  AttentionVariant attention = AttentionVariant::CAttnM;
  FfnVariant ffn = FfnVariant::Cffn;
  Index p = 64;      // embedding dimension
  Index l_max = 64;  // maximum sequence length
  Index heads = 4;   // baseline attention only
  Index ladders = 8; // L
  Index depth = 5;   // d
  Index alpha = 4;   // baseline FFN expansion
  PoleGuard guard;

  void validate() const {
    detail::require(p >= 1 && l_max >= 1, "block config: p and l_max must be >= 1");
    detail::require(heads >= 1 && p % heads == 0, "block config: heads must divide p");
    detail::require(ladders >= 1 && depth >= 1 && alpha >= 1,
                    "block config: L, d, alpha must be >= 1");
    guard.validate();
  }
};

template <typename Scalar>
using TrackerVisitor = std::function<void(const std::string&, RangeTracker<Scalar>&)>;

// A token-sequence map [batch, l, p] -> [batch, l, p]. Attention and FFN
// blocks share this surface so the transformer block can swap variants.
template <typename Scalar>
class SequenceMap {
 public:
  virtual ~SequenceMap() = default;
  virtual Var<Scalar> forward(ParamBinder<Scalar>& bind, Var<Scalar> x) = 0;
  virtual void collect_params(ParamRegistry<Scalar>& reg, const std::string& prefix) = 0;
  virtual void set_tracker_mode(typename RangeTracker<Scalar>::Mode) {}
  virtual void visit_trackers(const std::string&, const TrackerVisitor<Scalar>&) {}
};

namespace detail {

template <typename Scalar>
void check_sequence_input(const Tensor<Scalar>& x, Index p, Index l_max, const char* who) {
  require(x.rank() >= 2, cat(who, ": expected [..., l, p] input, got ", shape_str(x.shape())));
  require(x.last_dim() == p,
          cat(who, ": expected embedding dim ", p, ", got ", shape_str(x.shape())));
  require(x.rows() <= l_max,
          cat(who, ": sequence length ", x.rows(), " exceeds maximum ", l_max));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// CAttnU: transposed univariate-ladder token mixing
// ---------------------------------------------------------------------------
//
// The input is transposed to [batch, p, l] so each slice runs across
// positions. Two ensembles of univariate ladders act element-wise over
// positions (weights shared across the p dimension slices), an upper
// triangular mixer combines each ensemble causally, and the element-wise
// product of the two mixed representations forms cross-position interaction
// terms. Output is transposed back to [batch, l, p].
template <typename Scalar>
class CAttnU : public SequenceMap<Scalar> {
 public:
  CAttnU(const BlockConfig& cfg, Rng& rng)
      : cfg_(cfg),
        u1_({cfg.l_max, cfg.l_max}),
        u2_({cfg.l_max, cfg.l_max}),
        tracker1_(cfg.l_max),
        tracker2_(cfg.l_max) {
    const double std = 0.02;
    for (int e = 0; e < 2; ++e) {
      auto& w = e == 0 ? w1_ : w2_;
      for (Index k = 0; k <= cfg.depth; ++k) {
        Tensor<Scalar> wk({cfg.l_max});
        for (Index i = 0; i < cfg.l_max; ++i) {
          // Depth rows start at 1.0 for the same stable-regime reasons as the
          // ensemble bias slots; each a_k = w_k[t] * x_t sits near x_t.
          wk[i] = k == 0 ? static_cast<Scalar>(rng.normal(0.0, std)) : Scalar(1);
        }
        w.push_back(std::move(wk));
      }
    }
    for (auto* u : {&u1_, &u2_}) {
      for (Index r = 0; r < cfg.l_max; ++r) {
        for (Index c = r; c < cfg.l_max; ++c) {
          u->as_matrix()(r, c) = static_cast<Scalar>(rng.normal(0.0, std));
        }
      }
    }
  }

  void collect_params(ParamRegistry<Scalar>& reg, const std::string& prefix) override {
    for (int e = 0; e < 2; ++e) {
      auto& w = e == 0 ? w1_ : w2_;
      for (Index k = 0; k <= cfg_.depth; ++k) {
        reg.add(detail::cat(prefix, ".w", e + 1, ".", k), w[static_cast<size_t>(k)],
                static_cast<int>(k), false);
      }
    }
    reg.add(prefix + ".U1", u1_, 0, true);
    reg.add(prefix + ".U2", u2_, 0, true);
  }

  Var<Scalar> forward(ParamBinder<Scalar>& bind, Var<Scalar> x) override {
    detail::check_sequence_input(x.value(), cfg_.p, cfg_.l_max, "cattnu");
    const Index l = x.value().rows();
    Var<Scalar> xt = transpose_last2(x);  // [batch, p, l]

    Var<Scalar> h1 = ensemble(bind, xt, w1_, tracker1_, l);
    Var<Scalar> h2 = ensemble(bind, xt, w2_, tracker2_, l);
    Var<Scalar> mixed1 = triu_matmul(h1, topleft_block(bind(u1_), l));
    Var<Scalar> mixed2 = triu_matmul(h2, topleft_block(bind(u2_), l));
    return transpose_last2(mul(mixed1, mixed2));
  }

  void set_tracker_mode(typename RangeTracker<Scalar>::Mode m) override {
    tracker1_.set_mode(m);
    tracker2_.set_mode(m);
  }

  void visit_trackers(const std::string& prefix, const TrackerVisitor<Scalar>& fn) override {
    fn(prefix + ".ens1", tracker1_);
    fn(prefix + ".ens2", tracker2_);
  }

  // Strict upper-triangularity of the mixers (checked by training code).
  bool mixers_upper_triangular() const {
    for (const auto* u : {&u1_, &u2_}) {
      for (Index r = 0; r < cfg_.l_max; ++r) {
        for (Index c = 0; c < r; ++c) {
          if (u->as_matrix()(r, c) != Scalar(0)) return false;
        }
      }
    }
    return true;
  }

  Tensor<Scalar>& u1() { return u1_; }
  Tensor<Scalar>& u2() { return u2_; }
  std::vector<Tensor<Scalar>>& w1() { return w1_; }
  std::vector<Tensor<Scalar>>& w2() { return w2_; }

 private:
  // One univariate ensemble: w_0 (.) x plus the continued-fraction tail over
  // a_k = w_k (.) x, element-wise across positions.
  Var<Scalar> ensemble(ParamBinder<Scalar>& bind, Var<Scalar> xt,
                       std::vector<Tensor<Scalar>>& w, RangeTracker<Scalar>& tracker, Index l) {
    auto w_at = [&](Index k) {
      Var<Scalar> wk = bind(w[static_cast<size_t>(k)]);
      return l == cfg_.l_max ? wk : slice_last(wk, 0, l);
    };
    std::vector<Var<Scalar>> denominators;
    denominators.reserve(static_cast<size_t>(cfg_.depth));
    for (Index k = 1; k <= cfg_.depth; ++k) denominators.push_back(mul(xt, w_at(k)));
    Var<Scalar> tail = cf_layer(stack_last(denominators), cfg_.guard);
    if (tracker.mode() == RangeTracker<Scalar>::Mode::Recording) {
      tracker.observe_prefix(tail.value());
    } else if (tracker.has_bounds()) {
      tail = clamp_channels(tail, tracker.lo_first(l), tracker.hi_first(l));
    }
    return add(mul(xt, w_at(0)), tail);
  }

  BlockConfig cfg_;
  std::vector<Tensor<Scalar>> w1_, w2_;  // index k = depth (0 = linear term), each [l_max]
  Tensor<Scalar> u1_, u2_;               // upper triangular mixers
  RangeTracker<Scalar> tracker1_, tracker2_;
};

// ---------------------------------------------------------------------------
// CAttnM: ladder-scored causal attention
// ---------------------------------------------------------------------------
//
// Per token, L p-variate ladders produce scores y_j = w_0^(j) x + f~(W^(j) x);
// the position matrix F maps them to one score per (token, position) pair,
// a causal softmax turns rows into prefix-supported attention weights, and
// the result weights the value projection X Wv.
template <typename Scalar>
class CAttnM : public SequenceMap<Scalar> {
 public:
  CAttnM(const BlockConfig& cfg, Rng& rng)
      : cfg_(cfg),
        w0_({cfg.ladders, cfg.p + 1}),
        f_({cfg.ladders, cfg.l_max}),
        wv_({cfg.p, cfg.p}),
        tracker_(cfg.ladders) {
    const double w_std = 0.02 / std::sqrt(static_cast<double>(cfg.p));
    for (Index k = 0; k < cfg.depth; ++k) {
      Tensor<Scalar> wk({cfg.ladders, cfg.p + 1});
      for (Index j = 0; j < cfg.ladders; ++j) {
        wk.as_matrix()(j, 0) = Scalar(1);
        for (Index c = 1; c <= cfg.p; ++c) {
          wk.as_matrix()(j, c) = static_cast<Scalar>(rng.normal(0.0, w_std));
        }
      }
      wk_.push_back(std::move(wk));
    }
    for (Index i = 0; i < w0_.size(); ++i) w0_[i] = static_cast<Scalar>(rng.normal(0.0, 0.02));
    for (Index i = 0; i < f_.size(); ++i) f_[i] = static_cast<Scalar>(rng.normal(0.0, 0.02));
    for (Index i = 0; i < wv_.size(); ++i) wv_[i] = static_cast<Scalar>(rng.normal(0.0, 0.02));
  }

  void collect_params(ParamRegistry<Scalar>& reg, const std::string& prefix) override {
    reg.add(prefix + ".w0", w0_, 0, true);
    for (Index k = 0; k < cfg_.depth; ++k) {
      reg.add(detail::cat(prefix, ".W", k + 1), wk_[static_cast<size_t>(k)],
              static_cast<int>(k + 1), true);
    }
    reg.add(prefix + ".F", f_, 0, true);
    reg.add(prefix + ".Wv", wv_, 0, true);
  }

  Var<Scalar> forward(ParamBinder<Scalar>& bind, Var<Scalar> x) override {
    detail::check_sequence_input(x.value(), cfg_.p, cfg_.l_max, "cattnm");
    const Index l = x.value().rows();

    Var<Scalar> xa = augment_ones(x);                 // [batch, l, p+1]
    Var<Scalar> y = matmul_nt(xa, bind(w0_));         // a_0 terms, [batch, l, L]
    std::vector<Var<Scalar>> denominators;
    denominators.reserve(static_cast<size_t>(cfg_.depth));
    for (auto& wk : wk_) denominators.push_back(matmul_nt(xa, bind(wk)));
    Var<Scalar> z = cf_layer(stack_last(denominators), cfg_.guard);
    if (tracker_.mode() == RangeTracker<Scalar>::Mode::Recording) {
      tracker_.observe(z.value());
    } else if (tracker_.has_bounds()) {
      z = clamp_channels(z, tracker_.lo(), tracker_.hi());
    }
    y = add(y, z);

    Var<Scalar> f = bind(f_);
    if (l < cfg_.l_max) f = slice_last(f, 0, l);
    Var<Scalar> attn = causal_softmax(matmul(y, f));  // [batch, l, l]
    Var<Scalar> values = matmul(x, bind(wv_));        // [batch, l, p]
    return bmm(attn, values);
  }

  void set_tracker_mode(typename RangeTracker<Scalar>::Mode m) override {
    tracker_.set_mode(m);
  }

  void visit_trackers(const std::string& prefix, const TrackerVisitor<Scalar>& fn) override {
    fn(prefix + ".ladders", tracker_);
  }

  Tensor<Scalar>& f() { return f_; }
  Tensor<Scalar>& wv() { return wv_; }
  Tensor<Scalar>& w0() { return w0_; }
  std::vector<Tensor<Scalar>>& wk() { return wk_; }

 private:
  BlockConfig cfg_;
  Tensor<Scalar> w0_;                  // [L, p+1]
  std::vector<Tensor<Scalar>> wk_;     // depth k rows, [L, p+1] each
  Tensor<Scalar> f_;                   // [L, l_max]
  Tensor<Scalar> wv_;                  // [p, p]
  RangeTracker<Scalar> tracker_;
};

// ---------------------------------------------------------------------------
// Cffn: gated non-expanded ladder feed-forward
// ---------------------------------------------------------------------------
//
// h = silu(X Wg + bg) (.) (X Wv + bv) keeps the hidden width at p (alpha = 1);
// a p -> p ladder ensemble maps h per token. No cross-position mixing.
template <typename Scalar>
class Cffn : public SequenceMap<Scalar> {
 public:
  Cffn(const BlockConfig& cfg, Rng& rng)
      : cfg_(cfg),
        wg_(Tensor<Scalar>::randn({cfg.p, cfg.p}, rng, 0.0, 0.02)),
        bg_({cfg.p}),
        wv_(Tensor<Scalar>::randn({cfg.p, cfg.p}, rng, 0.0, 0.02)),
        bv_({cfg.p}),
        ensemble_(ladder_config(cfg), rng) {}

  static LadderConfig ladder_config(const BlockConfig& cfg) {
    LadderConfig lc;
    lc.p = cfg.p;
    lc.q = cfg.p;
    lc.ladders = cfg.ladders;
    lc.depth = cfg.depth;
    lc.guard = cfg.guard;
    return lc;
  }

  void collect_params(ParamRegistry<Scalar>& reg, const std::string& prefix) override {
    reg.add(prefix + ".Wg", wg_, 0, true);
    reg.add(prefix + ".bg", bg_, 0, false);
    reg.add(prefix + ".Wv", wv_, 0, true);
    reg.add(prefix + ".bv", bv_, 0, false);
    ensemble_.collect_params(reg, prefix + ".ladders");
  }

  Var<Scalar> forward(ParamBinder<Scalar>& bind, Var<Scalar> x) override {
    detail::check_sequence_input(x.value(), cfg_.p, cfg_.l_max, "cffn");
    Var<Scalar> gate = silu(add(matmul(x, bind(wg_)), bind(bg_)));
    Var<Scalar> value = add(matmul(x, bind(wv_)), bind(bv_));
    return ensemble_.forward(bind, mul(gate, value));
  }

  void set_tracker_mode(typename RangeTracker<Scalar>::Mode m) override {
    ensemble_.tracker().set_mode(m);
  }

  void visit_trackers(const std::string& prefix, const TrackerVisitor<Scalar>& fn) override {
    fn(prefix + ".ladders", ensemble_.tracker());
  }

  LadderEnsemble<Scalar>& ensemble() { return ensemble_; }
  Tensor<Scalar>& wg() { return wg_; }
  Tensor<Scalar>& bg() { return bg_; }
  Tensor<Scalar>& wv() { return wv_; }
  Tensor<Scalar>& bv() { return bv_; }

 private:
  BlockConfig cfg_;
  Tensor<Scalar> wg_, bg_, wv_, bv_;
  LadderEnsemble<Scalar> ensemble_;
};

// ---------------------------------------------------------------------------
// baselines
// ---------------------------------------------------------------------------

// Standard causal multi-head attention with combined QKVO projections.
template <typename Scalar>
class BaselineAttention : public SequenceMap<Scalar> {
 public:
  BaselineAttention(const BlockConfig& cfg, Rng& rng)
      : cfg_(cfg),
        wq_(Tensor<Scalar>::randn({cfg.p, cfg.p}, rng, 0.0, 0.02)),
        wk_(Tensor<Scalar>::randn({cfg.p, cfg.p}, rng, 0.0, 0.02)),
        wv_(Tensor<Scalar>::randn({cfg.p, cfg.p}, rng, 0.0, 0.02)),
        wo_(Tensor<Scalar>::randn({cfg.p, cfg.p}, rng, 0.0, 0.02)),
        bq_({cfg.p}),
        bk_({cfg.p}),
        bv_({cfg.p}),
        bo_({cfg.p}) {}

  void collect_params(ParamRegistry<Scalar>& reg, const std::string& prefix) override {
    reg.add(prefix + ".Wq", wq_, 0, true);
    reg.add(prefix + ".Wk", wk_, 0, true);
    reg.add(prefix + ".Wv", wv_, 0, true);
    reg.add(prefix + ".Wo", wo_, 0, true);
    reg.add(prefix + ".bq", bq_, 0, false);
    reg.add(prefix + ".bk", bk_, 0, false);
    reg.add(prefix + ".bv", bv_, 0, false);
    reg.add(prefix + ".bo", bo_, 0, false);
  }

  Var<Scalar> forward(ParamBinder<Scalar>& bind, Var<Scalar> x) override {
    detail::check_sequence_input(x.value(), cfg_.p, cfg_.l_max, "attention");
    const Index ph = cfg_.p / cfg_.heads;

    Var<Scalar> q = add(matmul(x, bind(wq_)), bind(bq_));
    Var<Scalar> k = add(matmul(x, bind(wk_)), bind(bk_));
    Var<Scalar> v = add(matmul(x, bind(wv_)), bind(bv_));

    std::vector<Var<Scalar>> heads;
    heads.reserve(static_cast<size_t>(cfg_.heads));
    for (Index h = 0; h < cfg_.heads; ++h) {
      Var<Scalar> qh = slice_last(q, h * ph, ph);
      Var<Scalar> kh = slice_last(k, h * ph, ph);
      Var<Scalar> vh = slice_last(v, h * ph, ph);
      Var<Scalar> scores =
          scale(bmm_nt(qh, kh), Scalar(1) / static_cast<Scalar>(std::sqrt(double(ph))));
      heads.push_back(bmm(causal_softmax(scores), vh));
    }
    return add(matmul(concat_last(heads), bind(wo_)), bind(bo_));
  }

 private:
  BlockConfig cfg_;
  Tensor<Scalar> wq_, wk_, wv_, wo_;
  Tensor<Scalar> bq_, bk_, bv_, bo_;
};

// Two-layer GELU FFN with expansion alpha.
template <typename Scalar>
class BaselineFfn : public SequenceMap<Scalar> {
 public:
  BaselineFfn(const BlockConfig& cfg, Rng& rng)
      : cfg_(cfg),
        w1_(Tensor<Scalar>::randn({cfg.p, cfg.alpha * cfg.p}, rng, 0.0, 0.02)),
        b1_({cfg.alpha * cfg.p}),
        w2_(Tensor<Scalar>::randn({cfg.alpha * cfg.p, cfg.p}, rng, 0.0, 0.02)),
        b2_({cfg.p}) {}

  void collect_params(ParamRegistry<Scalar>& reg, const std::string& prefix) override {
    reg.add(prefix + ".W1", w1_, 0, true);
    reg.add(prefix + ".b1", b1_, 0, false);
    reg.add(prefix + ".W2", w2_, 0, true);
    reg.add(prefix + ".b2", b2_, 0, false);
  }

  Var<Scalar> forward(ParamBinder<Scalar>& bind, Var<Scalar> x) override {
    detail::check_sequence_input(x.value(), cfg_.p, cfg_.l_max, "ffn");
    Var<Scalar> h = gelu(add(matmul(x, bind(w1_)), bind(b1_)));
    return add(matmul(h, bind(w2_)), bind(b2_));
  }

 private:
  BlockConfig cfg_;
  Tensor<Scalar> w1_, b1_, w2_, b2_;
};

// ---------------------------------------------------------------------------
// block assembly
// ---------------------------------------------------------------------------

template <typename Scalar>
std::unique_ptr<SequenceMap<Scalar>> make_attention(const BlockConfig& cfg, Rng& rng) {
  switch (cfg.attention) {
    case AttentionVariant::Baseline: return std::make_unique<BaselineAttention<Scalar>>(cfg, rng);
    case AttentionVariant::CAttnU: return std::make_unique<CAttnU<Scalar>>(cfg, rng);
    case AttentionVariant::CAttnM: return std::make_unique<CAttnM<Scalar>>(cfg, rng);
  }
  throw Error("unknown attention variant");
}

template <typename Scalar>
std::unique_ptr<SequenceMap<Scalar>> make_ffn(const BlockConfig& cfg, Rng& rng) {
  switch (cfg.ffn) {
    case FfnVariant::Baseline: return std::make_unique<BaselineFfn<Scalar>>(cfg, rng);
    case FfnVariant::Cffn: return std::make_unique<Cffn<Scalar>>(cfg, rng);
  }
  throw Error("unknown ffn variant");
}

// Pre-norm residual transformer block: x + Attn(norm(x)), then + FFN(norm(.)).
template <typename Scalar>
class TransformerBlock {
 public:
  TransformerBlock(const BlockConfig& cfg, Rng& rng)
      : cfg_(cfg),
        ln1_gain_(Tensor<Scalar>::full({cfg.p}, Scalar(1))),
        ln1_bias_({cfg.p}),
        ln2_gain_(Tensor<Scalar>::full({cfg.p}, Scalar(1))),
        ln2_bias_({cfg.p}),
        attention_(make_attention<Scalar>(cfg, rng)),
        ffn_(make_ffn<Scalar>(cfg, rng)) {
    cfg.validate();
  }

  void collect_params(ParamRegistry<Scalar>& reg, const std::string& prefix) {
    reg.add(prefix + ".ln1.gain", ln1_gain_, 0, false);
    reg.add(prefix + ".ln1.bias", ln1_bias_, 0, false);
    reg.add(prefix + ".ln2.gain", ln2_gain_, 0, false);
    reg.add(prefix + ".ln2.bias", ln2_bias_, 0, false);
    attention_->collect_params(reg, prefix + ".attn");
    ffn_->collect_params(reg, prefix + ".ffn");
  }

  Var<Scalar> forward(ParamBinder<Scalar>& bind, Var<Scalar> x) {
    Var<Scalar> normed1 = layer_norm(x, bind(ln1_gain_), bind(ln1_bias_));
    Var<Scalar> h = add(x, attention_->forward(bind, normed1));
    Var<Scalar> normed2 = layer_norm(h, bind(ln2_gain_), bind(ln2_bias_));
    return add(h, ffn_->forward(bind, normed2));
  }

  void set_tracker_mode(typename RangeTracker<Scalar>::Mode m) {
    attention_->set_tracker_mode(m);
    ffn_->set_tracker_mode(m);
  }

  void visit_trackers(const std::string& prefix, const TrackerVisitor<Scalar>& fn) {
    attention_->visit_trackers(prefix + ".attn", fn);
    ffn_->visit_trackers(prefix + ".ffn", fn);
  }

  SequenceMap<Scalar>& attention() { return *attention_; }
  SequenceMap<Scalar>& ffn() { return *ffn_; }

 private:
  BlockConfig cfg_;
  Tensor<Scalar> ln1_gain_, ln1_bias_, ln2_gain_, ln2_bias_;
  std::unique_ptr<SequenceMap<Scalar>> attention_;
  std::unique_ptr<SequenceMap<Scalar>> ffn_;
};

}  // namespace cfnet
