#pragma once

#include "cfnet/model.hpp"

// Parameter accounting: exact counts enumerate every stored entry of a
// constructed module; scale counts evaluate the closed-form expressions the
// architecture comparison is based on. Exact counts additionally carry
// biases, leading-1 slots, and the combiner projections the scale formulas
// absorb, so the two agree to within a small constant factor, not exactly.

namespace cfnet {

enum class ComponentKind { BaselineAttention, CAttnU, CAttnM, BaselineFfn, Cffn };

inline const char* component_name(ComponentKind kind) {
  switch (kind) {
    case ComponentKind::BaselineAttention: return "attention";
    case ComponentKind::CAttnU: return "cattnu";
    case ComponentKind::CAttnM: return "cattnm";
    case ComponentKind::BaselineFfn: return "ffn";
    case ComponentKind::Cffn: return "cffn";
  }
  return "?";
}

// Closed-form scale of parameters for one component.
inline long long scale_count(ComponentKind kind, const BlockConfig& cfg) {
  const long long p = cfg.p, l = cfg.l_max, L = cfg.ladders, d = cfg.depth, a = cfg.alpha;
  switch (kind) {
    case ComponentKind::BaselineAttention: return 4 * p * p;
    case ComponentKind::CAttnU: return l * (2 * d + l + 1);
    case ComponentKind::CAttnM: return L * (p + l) + p * p;
    case ComponentKind::BaselineFfn: return 2 * a * p * p;
    case ComponentKind::Cffn: return L * p * (d + 1) + 2 * p * p;
  }
  throw Error("unknown component kind");
}

// Exact count of a freshly constructed component.
inline long long exact_count(ComponentKind kind, const BlockConfig& cfg) {
  Rng rng(0);
  ParamRegistry<double> reg;
  std::unique_ptr<SequenceMap<double>> map;
  switch (kind) {
    case ComponentKind::BaselineAttention: map = std::make_unique<BaselineAttention<double>>(cfg, rng); break;
    case ComponentKind::CAttnU: map = std::make_unique<CAttnU<double>>(cfg, rng); break;
    case ComponentKind::CAttnM: map = std::make_unique<CAttnM<double>>(cfg, rng); break;
    case ComponentKind::BaselineFfn: map = std::make_unique<BaselineFfn<double>>(cfg, rng); break;
    case ComponentKind::Cffn: map = std::make_unique<Cffn<double>>(cfg, rng); break;
  }
  map->collect_params(reg, "c");
  return reg.total_size();
}

// Exact count of a full model at a given configuration.
inline long long model_exact_count(const ModelConfig& cfg) {
  Rng rng(0);
  CausalLM<double> model(cfg, rng);
  return model.registry().total_size();
}

// CAttnU counts upper-triangular mixers by stored entries; the dense [l, l]
// tensors hold l(l+1)/2 meaningful values each, which is what this reports.
inline long long exact_count_effective(ComponentKind kind, const BlockConfig& cfg) {
  long long n = exact_count(kind, cfg);
  if (kind == ComponentKind::CAttnU) {
    const long long l = cfg.l_max;
    n -= 2 * (l * l - l * (l + 1) / 2);  // drop the structurally-zero lower halves
  }
  return n;
}

}  // namespace cfnet
