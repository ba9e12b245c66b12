#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "mtvrp/autodiff/ops.hpp"
#include "mtvrp/core/env.hpp"
#include "mtvrp/core/instance.hpp"
#include "mtvrp/policy/adapters.hpp"
#include "mtvrp/policy/config.hpp"
#include "mtvrp/policy/params.hpp"

namespace mtvrp::policy {

// One linear projection of the backbone that may carry adapters.
struct LayerSpec {
  std::string name;  // parameter prefix, e.g. "enc.0.attn.q"
  int d_in = 0;
  int d_out = 0;
  bool bias = false;
  bool adapted = false;
};

// Every linear projection of the backbone, in a fixed order.
std::vector<LayerSpec> layer_specs(const ModelConfig& cfg);

// LoRA rank actually used on a layer: min(rank, min(d_in, d_out) - 1).
int effective_rank(int rank, const LayerSpec& layer);

// Parameter names of the adapters attached to a layer.
std::string expert_prefix(const LayerSpec& layer, Basis expert);  // "<layer>.lora.<TAG>"
std::string free_prefix(const LayerSpec& layer);                  // "<layer>.free"
std::string gate_name(const LayerSpec& layer);                    // "<layer>.gate_W"

// The attention policy: parameters plus the stage that selects the forward pass of each
// adapted layer (plain, Gated-LoRA expert, or mixture of experts).
class Policy {
 public:
  Policy() = default;
  Policy(ModelConfig cfg, Stage stage, std::optional<Basis> expert, ParameterSet params);

  // Freshly initialised backbone; every tensor trainable.
  static Policy init_backbone(const ModelConfig& cfg, std::uint64_t seed);

  // Backbone frozen plus one trainable adapter set per adapted layer (A, B, gate vector).
  static Policy init_expert(const Policy& backbone, Basis expert, std::uint64_t seed);

  // Backbone and the four experts frozen; trainable free adapter and gate weights per layer.
  // Experts are slotted by their own basis tag, in any order. Throws std::invalid_argument on
  // missing/duplicate experts, dimension mismatch, or experts built on a different backbone.
  static Policy init_unified(const Policy& backbone, const std::vector<Policy>& experts, std::uint64_t seed);

  const ModelConfig& config() const { return cfg_; }
  // Gate activation and routing only affect the unified forward pass, so they may change after
  // training (routing ablations at evaluation time).
  void set_gating(GateActivation activation, Routing routing) {
    cfg_.activation = activation;
    cfg_.routing = routing;
  }
  // The expert flavour only matters when fine-tuning, so a backbone can be re-targeted.
  void set_expert_kind(ExpertKind kind, double lora_beta) {
    cfg_.expert_kind = kind;
    cfg_.lora_beta = lora_beta;
    validate(cfg_);
  }
  Stage stage() const { return stage_; }
  std::optional<Basis> expert() const { return expert_; }
  const ParameterSet& params() const { return params_; }
  ParameterSet& params() { return params_; }

  // Parameter names that make up the backbone.
  std::vector<std::string> backbone_names() const;

  friend bool operator==(const Policy&, const Policy&) = default;

 private:
  ModelConfig cfg_;
  Stage stage_ = Stage::backbone;
  std::optional<Basis> expert_;
  ParameterSet params_;
};

// Running sum of routed gate coefficients, per coefficient slot.
struct GateStats {
  std::array<double, kGateWidth> sum{};
  std::int64_t tokens = 0;

  void add(const ad::Tensor& alpha);
  std::array<double, kGateWidth> mean() const;
  void merge(const GateStats& other);
};

// Per-tape binding of parameters to tape leaves.
class ForwardContext {
 public:
  ForwardContext(ad::Tape& tape, const Policy& policy, Variant variant)
      : tape_(tape), policy_(policy), variant_(variant) {}

  // Every parameter gets a gradient, frozen or not (gradient checking).
  void set_grad_all(bool v) { grad_all_ = v; }
  // No parameter gets a gradient (inference).
  void set_no_grad(bool v) { no_grad_ = v; }
  void set_gate_stats(GateStats* stats) { stats_ = stats; }

  ad::Tape& tape() { return tape_; }
  const Policy& policy() const { return policy_; }
  Variant variant() const { return variant_; }

  ad::Var param(const std::string& name);
  const std::map<std::string, ad::Var>& bound() const { return bound_; }

  // Applies one projection through the stage's forward pass.
  ad::Var project(const LayerSpec& layer, ad::Var h);
  ad::Var project(const std::string& layer_name, ad::Var h);

 private:
  LinearVars base_vars(const LayerSpec& layer);
  LoraVars lora_vars(const std::string& prefix, bool with_gate);

  ad::Tape& tape_;
  const Policy& policy_;
  Variant variant_;
  bool grad_all_ = false;
  bool no_grad_ = false;
  GateStats* stats_ = nullptr;
  std::map<std::string, ad::Var> bound_;
  std::map<std::string, LayerSpec> specs_;
};

// Static input features: depot [1, 3] = (x, y, w0_end); customers [N, 7] =
// (x, y, q_lh/Q, q_bh/Q, tw_beg, tw_end, tw_dur). Infinite values become 0.
ad::Tensor depot_features(const ProblemInstance& inst);
ad::Tensor customer_features(const ProblemInstance& inst);

// Dynamic context features of one state: (remaining_lh/Q, remaining_bh/Q, traveled/l_dur,
// now/w0_end, open); inactive members contribute 0.
std::array<double, kDynamicFeatures> dynamic_features(const EnvState& state, const ProblemInstance& inst);

// Node embeddings [N+1, d_model].
ad::Var encode(ForwardContext& ctx, const ProblemInstance& inst);

// Step-invariant decoder tensors derived from the embeddings.
struct DecoderCache {
  ad::Var embeddings;
  ad::Var graph;       // [1, d]
  ad::Var glimpse_k;   // [N+1, d]
  ad::Var glimpse_v;   // [N+1, d]
  ad::Var logit_k;     // [N+1, d]
};
DecoderCache prepare_decoder(ForwardContext& ctx, ad::Var embeddings);

// One decoding step for M trajectories sharing the instance.
// current [M], dynamic [M, 5], mask [M, N+1]. Returns log-probabilities [M, N+1]
// (-inf on masked nodes).
ad::Var decode_step(ForwardContext& ctx, const DecoderCache& cache, std::span<const int> current,
                    const ad::Tensor& dynamic, const ad::Mask& mask);

// Probabilities for a single state (convenience wrapper: encode + one decoding step, no gradients kept).
std::vector<double> action_probabilities(const Policy& policy, const ProblemInstance& inst, const EnvState& state);

// Greedy choice: highest log-probability among feasible nodes, lowest index on ties.
int greedy_action(std::span<const double> log_probs, std::span<const std::uint8_t> mask);

}  // namespace mtvrp::policy
