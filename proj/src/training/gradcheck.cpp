#include "mtvrp/training/gradcheck.hpp"

#include <cmath>

#include "mtvrp/core/env.hpp"
#include "mtvrp/core/generate.hpp"
#include "mtvrp/core/rng.hpp"
#include "mtvrp/training/rollout.hpp"

namespace mtvrp::training {

namespace {

// Weighted sum of chosen-action log-probabilities along fixed trajectories, so that the
// objective stays smooth under small parameter changes.
ad::Var replay_objective(policy::ForwardContext& ctx, const ProblemInstance& inst,
                         const std::vector<std::vector<int>>& tours) {
  const int n1 = inst.num_nodes();
  policy::DecoderCache cache = policy::prepare_decoder(ctx, policy::encode(ctx, inst));
  const int m = static_cast<int>(tours.size());
  std::vector<EnvState> states(m, initial_state(inst));
  std::vector<std::size_t> pos(m, 1);
  for (int k = 0; k < m; ++k) apply_action(states[k], tours[k][1], inst);  // forced first customer
  for (auto& p : pos) p = 2;
  std::vector<ad::Var> terms;
  for (;;) {
    std::vector<int> rows, current, actions;
    for (int k = 0; k < m; ++k) {
      if (pos[k] < tours[k].size() && !states[k].terminal(inst)) rows.push_back(k);
    }
    if (rows.empty()) break;
    const int r = static_cast<int>(rows.size());
    std::vector<std::uint8_t> mask(static_cast<std::size_t>(r) * n1);
    ad::Tensor dyn({r, policy::kDynamicFeatures});
    ad::Tensor w({r, 1});
    for (int i = 0; i < r; ++i) {
      const EnvState& st = states[rows[i]];
      current.push_back(st.current);
      feasible_actions(st, inst, mask.data() + static_cast<std::size_t>(i) * n1);
      const auto f = policy::dynamic_features(st, inst);
      for (int c = 0; c < policy::kDynamicFeatures; ++c) dyn.at(i, c) = f[c];
      actions.push_back(tours[rows[i]][pos[rows[i]]]);
      w.at(i, 0) = 1.0 + 0.25 * rows[i];
    }
    ad::Var lp = policy::decode_step(ctx, cache, current, dyn, mask);
    terms.push_back(ad::sum(ad::mul_const(ad::gather(lp, actions), w)));
    for (int i = 0; i < r; ++i) {
      apply_action(states[rows[i]], actions[i], inst);
      ++pos[rows[i]];
    }
  }
  ad::Var total = terms.at(0);
  for (std::size_t i = 1; i < terms.size(); ++i) total = ad::add(total, terms[i]);
  return total;
}

double objective_value(const policy::Policy& p, const ProblemInstance& inst, const std::vector<std::vector<int>>& tours) {
  ad::Tape tape;
  policy::ForwardContext ctx(tape, p, inst.variant);
  ctx.set_no_grad(true);
  return replay_objective(ctx, inst, tours).value().item();
}

// Non-zero adapters and gate weights so that every path carries gradient.
void randomize_adapters(policy::Policy& p, std::uint64_t seed) {
  Rng rng = Rng::derive(seed, {0x9c});
  for (auto& [name, param] : p.params()) {
    const bool adapter = name.find(".lora.") != std::string::npos || name.find(".free.") != std::string::npos ||
                         name.ends_with(".gate_W");
    if (!adapter) continue;
    for (std::size_t i = 0; i < param.value.size(); ++i) param.value.data()[i] = rng.uniform(-0.3, 0.3);
  }
}

}  // namespace

GradcheckCase check_policy_gradients(const policy::Policy& policy, Variant variant, const GradcheckOptions& opt) {
  const ProblemInstance inst = sample_instance(opt.n, variant, Rng::derive(opt.seed, {0x61}).next());
  const int starts = std::min(3, inst.num_customers());
  std::vector<std::vector<int>> tours;
  for (const auto& t : rollout(policy, inst, starts, DecodeMode::sample, Rng::derive(opt.seed, {0x62}).next())
                           .trajectories) {
    tours.push_back(t.tour.nodes);
  }

  ad::Tape tape;
  policy::ForwardContext ctx(tape, policy, inst.variant);
  ctx.set_grad_all(true);
  ad::Var obj = replay_objective(ctx, inst, tours);
  tape.backward(obj);

  GradcheckCase out;
  Rng pick = Rng::derive(opt.seed, {0x63});
  policy::Policy probe = policy;
  for (const auto& [name, var] : ctx.bound()) {
    const ad::Tensor g = tape.grad(var);
    auto& value = probe.params().at(name).value;
    std::vector<std::size_t> idx;
    if (opt.entries_per_tensor <= 0 || static_cast<std::size_t>(opt.entries_per_tensor) >= value.size()) {
      for (std::size_t i = 0; i < value.size(); ++i) idx.push_back(i);
    } else {
      for (int k = 0; k < opt.entries_per_tensor; ++k) {
        idx.push_back(static_cast<std::size_t>(pick.uniform_int(0, static_cast<std::int64_t>(value.size()) - 1)));
      }
    }
    double diff2 = 0.0, a2 = 0.0, n2 = 0.0;
    for (std::size_t i : idx) {
      const double orig = value.data()[i];
      value.data()[i] = orig + opt.h;
      const double up = objective_value(probe, inst, tours);
      value.data()[i] = orig - opt.h;
      const double down = objective_value(probe, inst, tours);
      value.data()[i] = orig;
      const double num = (up - down) / (2.0 * opt.h);
      const double ana = g.data()[i];
      diff2 += (num - ana) * (num - ana);
      a2 += ana * ana;
      n2 += num * num;
    }
    const double rel = std::sqrt(diff2) / std::max({std::sqrt(a2), std::sqrt(n2), opt.floor});
    if (rel > out.max_rel_error || out.worst_tensor.empty()) {
      out.max_rel_error = rel;
      out.worst_tensor = name;
    }
    ++out.tensors;
    out.entries += static_cast<int>(idx.size());
  }
  return out;
}

std::vector<GradcheckCase> policy_gradcheck_suite(const GradcheckOptions& opt) {
  policy::ModelConfig cfg;
  cfg.d_model = opt.d_model;
  cfg.n_heads = 2;
  cfg.n_layers = 2;
  cfg.d_ff = 2 * opt.d_model;
  cfg.rank_frozen = 4;
  cfg.rank_free = 4;
  // Keep logits away from the tanh clip's flat region.
  cfg.logit_clip = 10.0;

  std::vector<GradcheckCase> out;
  const policy::Policy backbone = policy::Policy::init_backbone(cfg, opt.seed);
  const Variant all_bits = Variant::from_bits(15);
  {
    auto c = check_policy_gradients(backbone, Variant{}, opt);
    c.name = "backbone/CVRP";
    out.push_back(c);
  }
  std::vector<policy::Policy> experts;
  for (Basis b : kExpertBases) {
    policy::Policy e = policy::Policy::init_expert(backbone, b, opt.seed + 1);
    randomize_adapters(e, opt.seed + 10 + static_cast<std::uint64_t>(b));
    experts.push_back(e);
  }
  {
    auto c = check_policy_gradients(experts[3], basis_variant(Basis::time_window), opt);
    c.name = "expert-gated/VRPTW";
    out.push_back(c);
  }
  {
    policy::ModelConfig sc = cfg;
    sc.expert_kind = policy::ExpertKind::standard;
    sc.lora_beta = 0.7;
    policy::Policy sb(sc, policy::Stage::backbone, std::nullopt, backbone.params());
    policy::Policy e = policy::Policy::init_expert(sb, Basis::backhaul, opt.seed + 2);
    randomize_adapters(e, opt.seed + 20);
    auto c = check_policy_gradients(e, basis_variant(Basis::backhaul), opt);
    c.name = "expert-standard/VRPB";
    out.push_back(c);
  }
  for (auto act : {policy::GateActivation::softmax, policy::GateActivation::norm_softplus,
                   policy::GateActivation::sigmoid}) {
    policy::Policy u = policy::Policy::init_unified(backbone, experts, opt.seed + 3);
    u.set_gating(act, policy::Routing::dense);
    randomize_adapters(u, opt.seed + 30 + static_cast<std::uint64_t>(act));
    auto c = check_policy_gradients(u, all_bits, opt);
    c.name = "unified-" + std::string(policy::to_string(act)) + "/" + all_bits.name();
    out.push_back(c);
  }
  {
    // Top-k selection is piecewise; the exact routing mask is fixed by the variant.
    policy::Policy u = policy::Policy::init_unified(backbone, experts, opt.seed + 4);
    u.set_gating(policy::GateActivation::norm_softplus, policy::Routing::variant_exact);
    randomize_adapters(u, opt.seed + 40);
    const Variant v = Variant::parse("VRPBTW");
    auto c = check_policy_gradients(u, v, opt);
    c.name = "unified-exact/" + v.name();
    out.push_back(c);
  }
  return out;
}

}  // namespace mtvrp::training
