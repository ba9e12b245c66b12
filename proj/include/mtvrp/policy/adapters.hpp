#pragma once

#include <array>
#include <optional>
#include <span>
#include <vector>

#include "mtvrp/autodiff/ops.hpp"
#include "mtvrp/core/variant.hpp"
#include "mtvrp/policy/config.hpp"

// Low-rank adapters around a frozen linear layer, and the gated mixture of adapters.
//
// Throughout, h is [R, d2] (one token per row), W0 is [d1, d2], A is [r, d2], B is [d1, r].
// The backbone path is W0 h (+ b0 when the layer has a bias).
namespace mtvrp::policy {

struct LoraVars {
  ad::Var a;
  ad::Var b;
  std::optional<ad::Var> gate;  // Gated-LoRA gate vector [1, d2]
};

struct LinearVars {
  ad::Var w;
  std::optional<ad::Var> bias;
};

// W0 h + beta * B A h.
ad::Var lora_forward(ad::Var h, const LinearVars& base, const LoraVars& adapter, double beta);

// sigmoid(<g, h>) * W0 h + B A h, one scalar gate per token.
ad::Var gated_lora_forward(ad::Var h, const LinearVars& base, const LoraVars& adapter);

// Number of gate coefficients: alpha_0 for the backbone plus one per expert (O, B, L, TW).
inline constexpr int kGateWidth = 5;

// act(W^G h) for gate_w [5, d2] -> [R, 5].
//   softmax:       rows sum to 1
//   norm_softplus: softplus(z) / max(sum softplus(z), eps); eps only guards a vanishing sum
//   sigmoid:       elementwise, no sum constraint
ad::Var gate_coefficients(ad::Var h, ad::Var gate_w, GateActivation act, double eps = 1e-8);

// Plain-vector form of gate_coefficients for a single token's logits.
std::array<double, kGateWidth> gate_activation(std::span<const double, kGateWidth> logits, GateActivation act,
                                               double eps = 1e-8);

// Keep-mask over the 5 coefficients of one token. alpha_0 is never masked.
//   dense:         keep all
//   variant_topk:  keep the K largest expert coefficients, K = number of non-C bases in the
//                  variant; ties go to the lower expert index
//   variant_exact: keep exactly the experts whose basis the variant contains
std::array<bool, kGateWidth> route_mask(std::span<const double, kGateWidth> alpha, Routing routing, Variant variant);
std::array<double, kGateWidth> route(std::span<const double, kGateWidth> alpha, Routing routing, Variant variant);

struct MoseVars {
  LinearVars base;
  std::array<LoraVars, 4> experts;  // O, B, L, TW; gate vectors are ignored here
  LoraVars free;
  ad::Var gate_w;
};

struct MoseOptions {
  GateActivation activation = GateActivation::norm_softplus;
  Routing routing = Routing::dense;
  double eps = 1e-8;
};

// alpha = route(act(W^G h));
// out = alpha_0 W0 h + sum_i alpha_i B_i A_i h + B_free A_free h.
// When routed_alpha is non-null it receives the routed coefficients [R, 5].
ad::Var mose_forward(ad::Var h, const MoseVars& layer, const MoseOptions& opt, Variant variant,
                     ad::Tensor* routed_alpha = nullptr);

}  // namespace mtvrp::policy
