#pragma once

#include <cstdint>
#include <string>
#include <string_view>

namespace mtvrp::policy {

enum class GateActivation : std::uint8_t { softmax = 0, norm_softplus = 1, sigmoid = 2 };
enum class Routing : std::uint8_t { dense = 0, variant_topk = 1, variant_exact = 2 };
// Which forward pass an adapted linear layer uses.
enum class Stage : std::uint8_t { backbone = 0, expert = 1, unified = 2 };
// Expert adapter flavour used in stage 2: sigmoid-gated backbone path, or plain LoRA scaled by beta.
enum class ExpertKind : std::uint8_t { gated = 0, standard = 1 };

std::string_view to_string(GateActivation a);
std::string_view to_string(Routing r);
std::string_view to_string(Stage s);
std::string_view to_string(ExpertKind k);
GateActivation parse_activation(std::string_view s);
Routing parse_routing(std::string_view s);
ExpertKind parse_expert_kind(std::string_view s);

// Number of per-customer, depot and dynamic context features.
inline constexpr int kCustomerFeatures = 7;
inline constexpr int kDepotFeatures = 3;
inline constexpr int kDynamicFeatures = 5;

struct ModelConfig {
  int d_model = 128;
  int n_heads = 8;
  int n_layers = 3;
  int d_ff = 512;
  int rank_frozen = 32;
  int rank_free = 32;
  GateActivation activation = GateActivation::norm_softplus;
  Routing routing = Routing::dense;
  ExpertKind expert_kind = ExpertKind::gated;
  double lora_beta = 1.0;
  double logit_clip = 10.0;
  double norm_softplus_eps = 1e-8;
  // Which groups of linear layers carry adapters.
  bool adapt_embedding = true;
  bool adapt_encoder = true;
  bool adapt_decoder = true;

  friend bool operator==(const ModelConfig&, const ModelConfig&) = default;
};

void validate(const ModelConfig& cfg);

}  // namespace mtvrp::policy
