#include "mtvrp/training/trainer.hpp"

#include <chrono>
#include <cmath>
#include <stdexcept>

#include "json.hpp"
#include "mtvrp/core/generate.hpp"

namespace mtvrp::training {

void Adam::step(policy::ParameterSet& params, const std::map<std::string, ad::Tensor>& grads, double lr) {
  ++t_;
  const double c1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
  const double c2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
  for (auto& [name, p] : params) {
    if (p.frozen) continue;
    auto git = grads.find(name);
    const std::size_t n = p.value.size();
    auto& m = m_[name];
    auto& v = v_[name];
    if (m.size() != n) {
      m = ad::Tensor(p.value.shape(), 0.0);
      v = ad::Tensor(p.value.shape(), 0.0);
    }
    double* w = p.value.data();
    const double* g = git == grads.end() ? nullptr : git->second.data();
    for (std::size_t i = 0; i < n; ++i) {
      const double gi = (g ? g[i] : 0.0) + wd_ * w[i];
      m.data()[i] = b1_ * m.data()[i] + (1.0 - b1_) * gi;
      v.data()[i] = b2_ * v.data()[i] + (1.0 - b2_) * gi * gi;
      w[i] -= lr * (m.data()[i] / c1) / (std::sqrt(v.data()[i] / c2) + eps_);
    }
  }
}

std::vector<double> shared_baseline_advantages(const std::vector<double>& costs) {
  if (costs.empty()) return {};
  double mean = 0.0;
  for (double c : costs) mean += c;
  mean /= static_cast<double>(costs.size());
  std::vector<double> a(costs.size());
  for (std::size_t i = 0; i < costs.size(); ++i) a[i] = costs[i] - mean;
  return a;
}

namespace {

struct InstanceResult {
  std::map<std::string, ad::Tensor> grads;
  double loss = 0.0;
  double mean_cost = 0.0;
  int dropped = 0;
};

InstanceResult instance_gradient(const policy::Policy& policy, const ProblemInstance& inst, int starts, Rng rng,
                                 double weight) {
  ad::Tape tape;
  policy::ForwardContext ctx(tape, policy, inst.variant);
  RecordedSteps rec;
  InstanceRollout r = decode_instance(ctx, inst, starts, DecodeMode::sample, rng, &rec);
  InstanceResult out;
  out.dropped = static_cast<int>(r.dropped.size());
  std::vector<double> costs;
  for (const auto& t : r.trajectories) costs.push_back(t.tour.cost);
  for (double c : costs) out.mean_cost += c / static_cast<double>(costs.size());
  // Dropped starts shrink the baseline group; fewer than two survivors give no signal.
  if (costs.size() < 2) return out;
  const auto adv = shared_baseline_advantages(costs);
  const double w = weight / static_cast<double>(costs.size());
  std::vector<ad::Var> terms;
  for (std::size_t s = 0; s < rec.log_probs.size(); ++s) {
    const auto& rows = rec.rows[s];
    ad::Tensor coef({static_cast<int>(rows.size()), 1});
    bool any = false;
    for (std::size_t k = 0; k < rows.size(); ++k) {
      coef.data()[k] = w * adv[rows[k]];
      any = any || coef.data()[k] != 0.0;
    }
    if (any) terms.push_back(ad::sum(ad::mul_const(rec.log_probs[s], coef)));
  }
  for (std::size_t m = 0; m < costs.size(); ++m) out.loss += w * adv[m] * r.trajectories[m].log_prob;
  if (terms.empty()) return out;
  ad::Var loss = terms[0];
  for (std::size_t i = 1; i < terms.size(); ++i) loss = ad::add(loss, terms[i]);
  if (!tape.requires_grad(loss)) return out;
  tape.backward(loss);
  for (const auto& [name, var] : ctx.bound()) {
    if (policy.params().at(name).frozen) continue;
    out.grads.emplace(name, tape.grad(var));
  }
  return out;
}

}  // namespace

BatchGradient reinforce_gradient(const policy::Policy& policy, const std::vector<ProblemInstance>& batch, int starts,
                                 std::uint64_t seed, int jobs) {
  if (starts < 2) throw std::invalid_argument("the shared baseline needs at least two starts");
  BatchGradient out;
  if (batch.empty()) return out;
  const double weight = 1.0 / static_cast<double>(batch.size());
  std::vector<InstanceResult> per(batch.size());
  parallel_for(static_cast<int>(batch.size()), jobs, [&](int k) {
    per[k] = instance_gradient(policy, batch[k], starts, Rng::derive(seed, {static_cast<std::uint64_t>(k)}), weight);
  });
  for (auto& r : per) {
    for (auto& [name, g] : r.grads) {
      auto it = out.grads.find(name);
      if (it == out.grads.end()) {
        out.grads.emplace(name, std::move(g));
      } else {
        double* dst = it->second.data();
        const double* src = g.data();
        for (std::size_t i = 0; i < g.size(); ++i) dst[i] += src[i];
      }
    }
    out.metrics.loss += r.loss;
    out.metrics.mean_cost += r.mean_cost * weight;
    out.metrics.dropped_starts += r.dropped;
  }
  return out;
}

StepMetrics reinforce_step(policy::Policy& policy, Adam& opt, const std::vector<ProblemInstance>& batch, int starts,
                           double lr, std::uint64_t seed, int jobs) {
  BatchGradient g = reinforce_gradient(policy, batch, starts, seed, jobs);
  opt.step(policy.params(), g.grads, lr);
  return g.metrics;
}

std::string metrics_json_line(const EpochMetrics& m) {
  nlohmann::ordered_json j;
  j["stage"] = m.stage;
  j["epoch"] = m.epoch;
  j["mean_cost"] = nlohmann::ordered_json::object();
  for (const auto& [k, v] : m.mean_cost) j["mean_cost"][k] = v;
  j["loss"] = m.loss;
  j["lr"] = m.lr;
  j["wall_time"] = m.wall_time;
  return j.dump();
}

std::uint64_t stage_seed(std::uint64_t seed, int stage_id, int epoch, int batch) {
  return Rng::derive(seed, {static_cast<std::uint64_t>(stage_id), static_cast<std::uint64_t>(epoch),
                            static_cast<std::uint64_t>(batch)})
      .next();
}

int stage_id_for(const policy::Policy& p) {
  switch (p.stage()) {
    case policy::Stage::backbone: return 0;
    case policy::Stage::expert: return static_cast<int>(*p.expert());
    case policy::Stage::unified: return 5;
  }
  return 0;
}

namespace {

// Variant of batch b in epoch e.
using VariantPicker = std::function<Variant(int epoch, int batch)>;

void train_stage(policy::Policy& policy, const std::string& stage, const VariantPicker& pick, const TrainConfig& cfg,
                 const MetricsSink& sink) {
  validate(cfg);
  const int sid = stage_id_for(policy);
  Adam opt(cfg.weight_decay);
  const int batches = (cfg.instances_per_epoch + cfg.batch_size - 1) / cfg.batch_size;
  for (int e = 0; e < cfg.epochs; ++e) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = learning_rate(cfg, e);
    std::map<std::string, std::pair<double, int>> cost_acc;
    double loss = 0.0;
    int seen = 0;
    for (int b = 0; b < batches; ++b) {
      const int size = std::min(cfg.batch_size, cfg.instances_per_epoch - b * cfg.batch_size);
      const Variant v = pick(e, b);
      const std::uint64_t bseed = stage_seed(cfg.seed, sid, e, b);
      std::vector<ProblemInstance> batch;
      batch.reserve(size);
      for (int k = 0; k < size; ++k) {
        batch.push_back(sample_instance(cfg.n, v, instance_seed(bseed, static_cast<std::uint64_t>(k))));
      }
      const StepMetrics sm = reinforce_step(policy, opt, batch, cfg.starts, lr, Rng::derive(bseed, {~0ull}).next(),
                                            cfg.jobs);
      auto& acc = cost_acc[v.name()];
      acc.first += sm.mean_cost * size;
      acc.second += size;
      loss += sm.loss * size;
      seen += size;
    }
    if (!sink) continue;
    EpochMetrics m;
    m.stage = stage;
    m.epoch = e + 1;
    for (const auto& [k, a] : cost_acc) m.mean_cost[k] = a.first / a.second;
    m.loss = seen ? loss / seen : 0.0;
    m.lr = lr;
    m.wall_time = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    sink(m);
  }
}

}  // namespace

std::uint64_t backbone_init_seed(std::uint64_t seed) { return Rng::derive(seed, {0, 0xB0}).next(); }

policy::Policy pretrain_backbone(const policy::ModelConfig& model, const TrainConfig& cfg, const MetricsSink& sink) {
  policy::Policy p = policy::Policy::init_backbone(model, backbone_init_seed(cfg.seed));
  train_stage(p, "backbone", [](int, int) { return Variant{}; }, cfg, sink);
  return p;
}

policy::Policy finetune_expert(const policy::Policy& backbone, Variant variant, const TrainConfig& cfg,
                               const MetricsSink& sink) {
  const auto bases = variant.basis_set();
  if (bases.size() != 2) {
    throw std::invalid_argument("experts are trained on OVRP, VRPB, VRPL or VRPTW, not " + variant.name());
  }
  const Basis basis = bases[1];
  policy::Policy p = policy::Policy::init_expert(
      backbone, basis, Rng::derive(cfg.seed, {static_cast<std::uint64_t>(basis), 0xE0}).next());
  train_stage(p, "expert:" + std::string(basis_tag(basis)), [variant](int, int) { return variant; }, cfg, sink);
  return p;
}

policy::Policy train_unified(const policy::Policy& backbone, const std::vector<policy::Policy>& experts,
                             const TrainConfig& cfg, const MetricsSink& sink) {
  policy::Policy p = policy::Policy::init_unified(backbone, experts, Rng::derive(cfg.seed, {5, 0xA0}).next());
  const auto variants = all_variants();
  const std::uint64_t seed = cfg.seed;
  train_stage(
      p, "unified",
      [&variants, seed](int e, int b) {
        Rng r = Rng::derive(seed, {5, static_cast<std::uint64_t>(e), static_cast<std::uint64_t>(b), 0x5A});
        return variants[r.uniform_int(0, static_cast<std::int64_t>(variants.size()) - 1)];
      },
      cfg, sink);
  return p;
}

}  // namespace mtvrp::training
