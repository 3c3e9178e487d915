#pragma once

#include "cfnet/config.hpp"
#include "cfnet/trainer.hpp"

namespace cfnet {

inline AttentionVariant attention_variant_from(const std::string& name) {
  if (name == "baseline") return AttentionVariant::Baseline;
  if (name == "cattnu") return AttentionVariant::CAttnU;
  if (name == "cattnm") return AttentionVariant::CAttnM;
  throw ConfigError(detail::cat("unknown attention variant '", name, "'"));
}

inline FfnVariant ffn_variant_from(const std::string& name) {
  if (name == "baseline") return FfnVariant::Baseline;
  if (name == "cffn") return FfnVariant::Cffn;
  throw ConfigError(detail::cat("unknown ffn variant '", name, "'"));
}

// The named variants fix the (attention, ffn) pair; "custom" reads the two
// block keys.
inline void apply_variant(const Config& cfg, BlockConfig& block) {
  const std::string variant = cfg.get_enum("model.variant");
  if (variant == "baseline") {
    block.attention = AttentionVariant::Baseline;
    block.ffn = FfnVariant::Baseline;
  } else if (variant == "cofrgenet-f") {
    block.attention = AttentionVariant::Baseline;
    block.ffn = FfnVariant::Cffn;
  } else if (variant == "cofrgenet-a") {
    block.attention = AttentionVariant::CAttnM;
    block.ffn = FfnVariant::Baseline;
  } else if (variant == "cofrgenet") {
    block.attention = AttentionVariant::CAttnM;
    block.ffn = FfnVariant::Cffn;
  } else {
    block.attention = attention_variant_from(cfg.get_enum("model.attention"));
    block.ffn = ffn_variant_from(cfg.get_enum("model.ffn"));
  }
}

inline ModelConfig model_config_from(const Config& cfg) {
  ModelConfig mc;
  mc.vocab = cfg.get_int("model.vocab");
  mc.n_layers = cfg.get_int("model.n_layers");
  mc.block.p = cfg.get_int("model.p");
  mc.block.l_max = cfg.get_int("model.l");
  mc.block.heads = cfg.get_int("model.heads");
  mc.block.ladders = cfg.get_int("model.ladders");
  mc.block.depth = cfg.get_int("model.depth");
  mc.block.alpha = cfg.get_int("model.alpha");
  mc.block.guard.epsilon = cfg.get_real("model.epsilon");
  apply_variant(cfg, mc.block);
  return mc;
}

inline TrainConfig train_config_from(const Config& cfg, std::uint64_t seed,
                                     const std::string& out_dir) {
  TrainConfig tc;
  tc.model = model_config_from(cfg);
  tc.iters = cfg.get_int("train.iters");
  tc.batch = cfg.get_int("train.batch");
  tc.lr = cfg.get_real("train.lr");
  tc.beta1 = cfg.get_real("train.beta1");
  tc.beta2 = cfg.get_real("train.beta2");
  tc.weight_decay = cfg.get_real("train.weight_decay");
  tc.clip_norm = cfg.get_real("train.clip_norm");
  tc.schedule = cfg.get_bool("train.schedule");
  tc.eval_every = cfg.get_int("train.eval_every");
  tc.eval_stride = cfg.get_int("train.eval_stride");
  tc.checkpoint_every = cfg.get_int("train.checkpoint_every");
  tc.resume = cfg.get_string("train.resume");
  tc.seed = seed;
  tc.out_dir = out_dir;
  for (const auto& [key, value] : cfg.values()) tc.config_echo[key] = value;
  return tc;
}

}  // namespace cfnet
