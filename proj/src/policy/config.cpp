#include "mtvrp/policy/config.hpp"

#include <stdexcept>

namespace mtvrp::policy {

std::string_view to_string(GateActivation a) {
  switch (a) {
    case GateActivation::softmax: return "softmax";
    case GateActivation::norm_softplus: return "norm_softplus";
    case GateActivation::sigmoid: return "sigmoid";
  }
  return "?";
}

std::string_view to_string(Routing r) {
  switch (r) {
    case Routing::dense: return "dense";
    case Routing::variant_topk: return "variant_topk";
    case Routing::variant_exact: return "variant_exact";
  }
  return "?";
}

std::string_view to_string(Stage s) {
  switch (s) {
    case Stage::backbone: return "backbone";
    case Stage::expert: return "expert";
    case Stage::unified: return "unified";
  }
  return "?";
}

std::string_view to_string(ExpertKind k) { return k == ExpertKind::gated ? "gated" : "standard"; }

GateActivation parse_activation(std::string_view s) {
  for (auto a : {GateActivation::softmax, GateActivation::norm_softplus, GateActivation::sigmoid}) {
    if (to_string(a) == s) return a;
  }
  throw std::invalid_argument("unknown gate activation: " + std::string(s));
}

Routing parse_routing(std::string_view s) {
  for (auto r : {Routing::dense, Routing::variant_topk, Routing::variant_exact}) {
    if (to_string(r) == s) return r;
  }
  throw std::invalid_argument("unknown routing strategy: " + std::string(s));
}

ExpertKind parse_expert_kind(std::string_view s) {
  if (s == "gated") return ExpertKind::gated;
  if (s == "standard") return ExpertKind::standard;
  throw std::invalid_argument("unknown expert kind: " + std::string(s));
}

void validate(const ModelConfig& c) {
  if (c.d_model <= 0 || c.n_heads <= 0 || c.n_layers < 0 || c.d_ff <= 0) {
    throw std::invalid_argument("model dimensions must be positive");
  }
  if (c.d_model % c.n_heads != 0) throw std::invalid_argument("d_model must be divisible by n_heads");
  if (c.rank_frozen <= 0 || c.rank_free <= 0) throw std::invalid_argument("LoRA ranks must be positive");
  if (!(c.lora_beta > 0.0 && c.lora_beta <= 1.0)) throw std::invalid_argument("lora_beta must lie in (0, 1]");
  if (!(c.logit_clip > 0.0)) throw std::invalid_argument("logit_clip must be positive");
}

}  // namespace mtvrp::policy
