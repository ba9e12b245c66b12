#include "mtvrp/policy/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <set>
#include <stdexcept>

#include "mtvrp/core/rng.hpp"

namespace mtvrp::policy {

std::vector<LayerSpec> layer_specs(const ModelConfig& cfg) {
  const int d = cfg.d_model;
  std::vector<LayerSpec> out;
  out.push_back({"emb.depot", kDepotFeatures, d, true, cfg.adapt_embedding});
  out.push_back({"emb.customer", kCustomerFeatures, d, true, cfg.adapt_embedding});
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "enc." + std::to_string(l) + ".";
    for (const char* proj : {"attn.q", "attn.k", "attn.v", "attn.o"}) {
      out.push_back({p + proj, d, d, false, cfg.adapt_encoder});
    }
    out.push_back({p + "ff.1", d, cfg.d_ff, true, cfg.adapt_encoder});
    out.push_back({p + "ff.2", cfg.d_ff, d, true, cfg.adapt_encoder});
  }
  out.push_back({"dec.glimpse_k", d, d, false, cfg.adapt_decoder});
  out.push_back({"dec.glimpse_v", d, d, false, cfg.adapt_decoder});
  out.push_back({"dec.logit_k", d, d, false, cfg.adapt_decoder});
  out.push_back({"dec.context", 2 * d + kDynamicFeatures, d, false, cfg.adapt_decoder});
  out.push_back({"dec.glimpse_out", d, d, false, cfg.adapt_decoder});
  return out;
}

int effective_rank(int rank, const LayerSpec& layer) {
  return std::max(1, std::min(rank, std::min(layer.d_in, layer.d_out) - 1));
}

std::string expert_prefix(const LayerSpec& layer, Basis expert) {
  return layer.name + ".lora." + std::string(basis_tag(expert));
}
std::string free_prefix(const LayerSpec& layer) { return layer.name + ".free"; }
std::string gate_name(const LayerSpec& layer) { return layer.name + ".gate_W"; }

namespace {

ad::Tensor uniform_tensor(ad::Shape shape, double bound, Rng& rng) {
  ad::Tensor t(std::move(shape));
  for (double& v : t.values()) v = rng.uniform(-bound, bound);
  return t;
}

void add_adapter(ParameterSet& ps, const std::string& prefix, const LayerSpec& layer, int rank, bool with_gate,
                 Rng& rng) {
  const int r = effective_rank(rank, layer);
  ps.add(prefix + ".A", uniform_tensor({r, layer.d_in}, 1.0 / std::sqrt(static_cast<double>(layer.d_in)), rng), false);
  ps.add(prefix + ".B", ad::Tensor({layer.d_out, r}, 0.0), false);
  if (with_gate) ps.add(prefix + ".g", ad::Tensor({1, layer.d_in}, 0.0), false);
}

std::vector<std::string> norm_names(const ModelConfig& cfg) {
  std::vector<std::string> out;
  for (int l = 0; l < cfg.n_layers; ++l) {
    for (const char* n : {"norm1", "norm2"}) {
      for (const char* p : {"gamma", "beta"}) out.push_back("enc." + std::to_string(l) + "." + n + "." + p);
    }
  }
  return out;
}

}  // namespace

Policy::Policy(ModelConfig cfg, Stage stage, std::optional<Basis> expert, ParameterSet params)
    : cfg_(cfg), stage_(stage), expert_(expert), params_(std::move(params)) {
  validate(cfg_);
  if (stage_ == Stage::expert && (!expert_ || *expert_ == Basis::capacity)) {
    throw std::invalid_argument("expert policy needs a non-capacity basis tag");
  }
}

std::vector<std::string> Policy::backbone_names() const {
  std::vector<std::string> names;
  for (const auto& l : layer_specs(cfg_)) {
    names.push_back(l.name + ".weight");
    if (l.bias) names.push_back(l.name + ".bias");
  }
  for (auto& n : norm_names(cfg_)) names.push_back(n);
  return names;
}

Policy Policy::init_backbone(const ModelConfig& cfg, std::uint64_t seed) {
  validate(cfg);
  Rng rng = Rng::derive(seed, {0xb0});
  ParameterSet ps;
  for (const auto& l : layer_specs(cfg)) {
    const double bound = 1.0 / std::sqrt(static_cast<double>(l.d_in));
    ps.add(l.name + ".weight", uniform_tensor({l.d_out, l.d_in}, bound, rng), false);
    if (l.bias) ps.add(l.name + ".bias", uniform_tensor({l.d_out}, bound, rng), false);
  }
  for (const auto& n : norm_names(cfg)) {
    const bool gamma = n.ends_with("gamma");
    ps.add(n, ad::Tensor({cfg.d_model}, gamma ? 1.0 : 0.0), false);
  }
  return Policy(cfg, Stage::backbone, std::nullopt, std::move(ps));
}

Policy Policy::init_expert(const Policy& backbone, Basis expert, std::uint64_t seed) {
  if (backbone.stage() != Stage::backbone) throw std::invalid_argument("init_expert: needs a backbone policy");
  if (expert == Basis::capacity) throw std::invalid_argument("init_expert: CVRP has no expert");
  Rng rng = Rng::derive(seed, {0xe0, static_cast<std::uint64_t>(expert)});
  ParameterSet ps = backbone.params();
  ps.freeze_all();
  for (const auto& l : layer_specs(backbone.config())) {
    if (!l.adapted) continue;
    add_adapter(ps, expert_prefix(l, expert), l, backbone.config().rank_frozen, true, rng);
  }
  return Policy(backbone.config(), Stage::expert, expert, std::move(ps));
}

Policy Policy::init_unified(const Policy& backbone, const std::vector<Policy>& experts, std::uint64_t seed) {
  if (backbone.stage() != Stage::backbone) throw std::invalid_argument("init_unified: needs a backbone policy");
  const ModelConfig& cfg = backbone.config();
  std::set<Basis> seen;
  for (const auto& e : experts) {
    if (e.stage() != Stage::expert || !e.expert()) throw std::invalid_argument("init_unified: not an expert policy");
    if (!seen.insert(*e.expert()).second) {
      throw std::invalid_argument("init_unified: duplicate expert " + std::string(basis_tag(*e.expert())));
    }
    const ModelConfig& ec = e.config();
    if (ec.d_model != cfg.d_model || ec.n_heads != cfg.n_heads || ec.n_layers != cfg.n_layers ||
        ec.d_ff != cfg.d_ff || ec.rank_frozen != cfg.rank_frozen || ec.adapt_embedding != cfg.adapt_embedding ||
        ec.adapt_encoder != cfg.adapt_encoder || ec.adapt_decoder != cfg.adapt_decoder) {
      throw std::invalid_argument("init_unified: expert " + std::string(basis_tag(*e.expert())) +
                                  " has different dimensions");
    }
    for (const auto& name : backbone.backbone_names()) {
      if (!(e.params().at(name).value == backbone.params().at(name).value)) {
        throw std::invalid_argument("init_unified: expert " + std::string(basis_tag(*e.expert())) +
                                    " was fine-tuned from a different backbone (" + name + ")");
      }
    }
  }
  if (seen.size() != 4) throw std::invalid_argument("init_unified: need exactly the four experts O, B, L, TW");

  ParameterSet ps = backbone.params();
  for (const auto& e : experts) {
    for (const auto& [name, p] : e.params()) {
      if (name.find(".lora.") == std::string::npos) continue;
      ps.add(name, p.value, true);
    }
  }
  ps.freeze_all();
  Rng rng = Rng::derive(seed, {0xf0});
  for (const auto& l : layer_specs(cfg)) {
    if (!l.adapted) continue;
    add_adapter(ps, free_prefix(l), l, cfg.rank_free, false, rng);
    ps.add(gate_name(l), ad::Tensor({kGateWidth, l.d_in}, 0.0), false);
  }
  return Policy(cfg, Stage::unified, std::nullopt, std::move(ps));
}

void GateStats::add(const ad::Tensor& alpha) {
  for (int r = 0; r < alpha.rows(); ++r) {
    for (int i = 0; i < kGateWidth; ++i) sum[i] += alpha.at(r, i);
  }
  tokens += alpha.rows();
}

std::array<double, kGateWidth> GateStats::mean() const {
  std::array<double, kGateWidth> out{};
  if (tokens == 0) return out;
  for (int i = 0; i < kGateWidth; ++i) out[i] = sum[i] / static_cast<double>(tokens);
  return out;
}

void GateStats::merge(const GateStats& other) {
  for (int i = 0; i < kGateWidth; ++i) sum[i] += other.sum[i];
  tokens += other.tokens;
}

ad::Var ForwardContext::param(const std::string& name) {
  auto it = bound_.find(name);
  if (it != bound_.end()) return it->second;
  const Parameter& p = policy_.params().at(name);
  ad::Var v = tape_.leaf(p.value, !no_grad_ && (grad_all_ || !p.frozen));
  bound_.emplace(name, v);
  return v;
}

LinearVars ForwardContext::base_vars(const LayerSpec& layer) {
  LinearVars lv{param(layer.name + ".weight"), std::nullopt};
  if (layer.bias) lv.bias = param(layer.name + ".bias");
  return lv;
}

LoraVars ForwardContext::lora_vars(const std::string& prefix, bool with_gate) {
  LoraVars lv{param(prefix + ".A"), param(prefix + ".B"), std::nullopt};
  if (with_gate) lv.gate = param(prefix + ".g");
  return lv;
}

ad::Var ForwardContext::project(const std::string& layer_name, ad::Var h) {
  if (specs_.empty()) {
    for (auto& l : layer_specs(policy_.config())) specs_.emplace(l.name, l);
  }
  auto it = specs_.find(layer_name);
  if (it == specs_.end()) throw std::out_of_range("no layer named " + layer_name);
  return project(it->second, h);
}

ad::Var ForwardContext::project(const LayerSpec& layer, ad::Var h) {
  const ModelConfig& cfg = policy_.config();
  LinearVars base = base_vars(layer);
  if (!layer.adapted || policy_.stage() == Stage::backbone) return ad::linear(h, base.w, base.bias);
  if (policy_.stage() == Stage::expert) {
    const std::string prefix = expert_prefix(layer, *policy_.expert());
    if (cfg.expert_kind == ExpertKind::gated) return gated_lora_forward(h, base, lora_vars(prefix, true));
    return lora_forward(h, base, lora_vars(prefix, false), cfg.lora_beta);
  }
  MoseVars mv{base, {}, lora_vars(free_prefix(layer), false), param(gate_name(layer))};
  for (int i = 0; i < 4; ++i) mv.experts[i] = lora_vars(expert_prefix(layer, kExpertBases[i]), false);
  MoseOptions opt{cfg.activation, cfg.routing, cfg.norm_softplus_eps};
  if (!stats_) return mose_forward(h, mv, opt, variant_);
  ad::Tensor alpha;
  ad::Var out = mose_forward(h, mv, opt, variant_, &alpha);
  stats_->add(alpha);
  return out;
}

namespace {
double finite_or_zero(double v) { return std::isfinite(v) ? v : 0.0; }
}  // namespace

ad::Tensor depot_features(const ProblemInstance& inst) {
  return ad::Tensor({1, kDepotFeatures}, {inst.coords[0].x, inst.coords[0].y, finite_or_zero(inst.system_end())});
}

ad::Tensor customer_features(const ProblemInstance& inst) {
  const int n = inst.num_customers();
  ad::Tensor t({n, kCustomerFeatures});
  const double q = static_cast<double>(inst.capacity);
  for (int j = 1; j <= n; ++j) {
    const int r = j - 1;
    t.at(r, 0) = inst.coords[j].x;
    t.at(r, 1) = inst.coords[j].y;
    t.at(r, 2) = inst.linehaul[j] / q;
    t.at(r, 3) = inst.backhaul[j] / q;
    t.at(r, 4) = finite_or_zero(inst.tw_beg[j]);
    t.at(r, 5) = finite_or_zero(inst.tw_end[j]);
    t.at(r, 6) = inst.tw_dur[j];
  }
  return t;
}

std::array<double, kDynamicFeatures> dynamic_features(const EnvState& s, const ProblemInstance& inst) {
  const double q = static_cast<double>(inst.capacity);
  std::array<double, kDynamicFeatures> f{};
  f[0] = s.basis.c.remaining_lh / q;
  if (s.basis.b) f[1] = s.basis.b->remaining_bh / q;
  if (s.basis.l && std::isfinite(inst.dur_limit)) f[2] = s.basis.l->traveled / inst.dur_limit;
  if (s.basis.tw && std::isfinite(inst.system_end())) f[3] = s.basis.tw->now / inst.system_end();
  if (s.basis.o) f[4] = s.basis.o->open ? 1.0 : 0.0;
  return f;
}

ad::Var encode(ForwardContext& ctx, const ProblemInstance& inst) {
  ad::Tape& tape = ctx.tape();
  const ModelConfig& cfg = ctx.policy().config();
  ad::Var depot = ctx.project("emb.depot", tape.constant(depot_features(inst)));
  ad::Var h = depot;
  if (inst.num_customers() > 0) {
    ad::Var cust = ctx.project("emb.customer", tape.constant(customer_features(inst)));
    h = ad::concat_rows({depot, cust});
  }
  for (int l = 0; l < cfg.n_layers; ++l) {
    const std::string p = "enc." + std::to_string(l) + ".";
    ad::Var q = ctx.project(p + "attn.q", h);
    ad::Var k = ctx.project(p + "attn.k", h);
    ad::Var v = ctx.project(p + "attn.v", h);
    ad::Var a = ctx.project(p + "attn.o", ad::attention(q, k, v, {}, cfg.n_heads));
    h = ad::layer_norm(ad::add(h, a), ctx.param(p + "norm1.gamma"), ctx.param(p + "norm1.beta"));
    ad::Var f = ctx.project(p + "ff.2", ad::relu(ctx.project(p + "ff.1", h)));
    h = ad::layer_norm(ad::add(h, f), ctx.param(p + "norm2.gamma"), ctx.param(p + "norm2.beta"));
  }
  return h;
}

DecoderCache prepare_decoder(ForwardContext& ctx, ad::Var embeddings) {
  DecoderCache c;
  c.embeddings = embeddings;
  c.graph = ad::mean_rows(embeddings);
  c.glimpse_k = ctx.project("dec.glimpse_k", embeddings);
  c.glimpse_v = ctx.project("dec.glimpse_v", embeddings);
  c.logit_k = ctx.project("dec.logit_k", embeddings);
  return c;
}

ad::Var decode_step(ForwardContext& ctx, const DecoderCache& cache, std::span<const int> current,
                    const ad::Tensor& dynamic, const ad::Mask& mask) {
  const ModelConfig& cfg = ctx.policy().config();
  const int m = static_cast<int>(current.size());
  if (dynamic.rank() != 2 || dynamic.rows() != m || dynamic.cols() != kDynamicFeatures) {
    throw ad::ShapeError("decode_step: dynamic features must be [M, 5], got " + ad::shape_str(dynamic.shape()));
  }
  ad::Var cur = ad::gather_rows(cache.embeddings, current);
  ad::Var context = ad::concat_cols({cur, ad::repeat_rows(cache.graph, m), ctx.tape().constant(dynamic)});
  ad::Var q = ctx.project("dec.context", context);
  ad::Var glimpse = ad::attention(q, cache.glimpse_k, cache.glimpse_v, mask, cfg.n_heads);
  ad::Var q2 = ctx.project("dec.glimpse_out", glimpse);
  ad::Var compat = ad::scale(ad::linear(q2, cache.logit_k), 1.0 / std::sqrt(static_cast<double>(cfg.d_model)));
  ad::Var logits = ad::tanh(compat, cfg.logit_clip);
  return ad::masked_log_softmax(logits, mask);
}

std::vector<double> action_probabilities(const Policy& policy, const ProblemInstance& inst, const EnvState& state) {
  ad::Tape tape;
  ForwardContext ctx(tape, policy, inst.variant);
  ctx.set_no_grad(true);
  DecoderCache cache = prepare_decoder(ctx, encode(ctx, inst));
  const auto mask = feasible_actions(state, inst);
  const auto dyn = dynamic_features(state, inst);
  ad::Tensor dt({1, kDynamicFeatures}, std::vector<double>(dyn.begin(), dyn.end()));
  const int cur[1] = {state.current};
  ad::Var lp = decode_step(ctx, cache, cur, dt, mask);
  std::vector<double> p(lp.value().size());
  for (std::size_t i = 0; i < p.size(); ++i) p[i] = mask[i] ? std::exp(lp.value()[i]) : 0.0;
  return p;
}

int greedy_action(std::span<const double> log_probs, std::span<const std::uint8_t> mask) {
  int best = -1;
  double best_v = -std::numeric_limits<double>::infinity();
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    if (!mask[i]) continue;
    if (best < 0 || log_probs[i] > best_v) {
      best = static_cast<int>(i);
      best_v = log_probs[i];
    }
  }
  if (best < 0) throw ContractViolation("greedy_action: no feasible node");
  return best;
}

}  // namespace mtvrp::policy
