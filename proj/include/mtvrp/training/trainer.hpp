#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "mtvrp/core/variant.hpp"
#include "mtvrp/policy/model.hpp"
#include "mtvrp/training/config.hpp"
#include "mtvrp/training/rollout.hpp"

namespace mtvrp::training {

// Adam with L2 weight decay folded into the gradient. Frozen parameters are never touched.
class Adam {
 public:
  explicit Adam(double weight_decay = 0.0, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8)
      : wd_(weight_decay), b1_(beta1), b2_(beta2), eps_(eps) {}

  void step(policy::ParameterSet& params, const std::map<std::string, ad::Tensor>& grads, double lr);
  std::int64_t steps() const { return t_; }

 private:
  double wd_, b1_, b2_, eps_;
  std::int64_t t_ = 0;
  std::map<std::string, ad::Tensor> m_, v_;
};

// c_m - mean(c) for each start.
std::vector<double> shared_baseline_advantages(const std::vector<double>& costs);

struct StepMetrics {
  double loss = 0.0;       // value of the surrogate (mean over instances of mean_m A_m log pi_m)
  double mean_cost = 0.0;  // mean over instances of the mean sampled cost
  int dropped_starts = 0;
};

// Gradient of the REINFORCE surrogate for one batch, summed over instances in index order.
// Instance k samples with Rng::derive(seed, {k}). Only non-frozen parameters appear in the map.
struct BatchGradient {
  std::map<std::string, ad::Tensor> grads;
  StepMetrics metrics;
};
BatchGradient reinforce_gradient(const policy::Policy& policy, const std::vector<ProblemInstance>& batch, int starts,
                                 std::uint64_t seed, int jobs = 1);

// One optimiser step: sample M trajectories per instance, shared mean baseline, Adam update.
// Throws std::invalid_argument when starts < 2.
StepMetrics reinforce_step(policy::Policy& policy, Adam& opt, const std::vector<ProblemInstance>& batch, int starts,
                           double lr, std::uint64_t seed, int jobs = 1);

struct EpochMetrics {
  std::string stage;  // "backbone", "expert:<TAG>", "unified"
  int epoch = 0;      // 1-based
  std::map<std::string, double> mean_cost;  // by variant name, over the epoch's sampled rollouts
  double loss = 0.0;
  double lr = 0.0;
  double wall_time = 0.0;  // seconds
};
using MetricsSink = std::function<void(const EpochMetrics&)>;

// One JSON object per line.
std::string metrics_json_line(const EpochMetrics& m);

// Seed of the backbone's initial weights; Policy::init_backbone(model, it) is the untrained start.
std::uint64_t backbone_init_seed(std::uint64_t seed);

// Stage 1: CVRP only.
policy::Policy pretrain_backbone(const policy::ModelConfig& model, const TrainConfig& cfg,
                                 const MetricsSink& sink = {});

// Stage 2: one basis variant (OVRP, VRPB, VRPL or VRPTW); only the expert adapter trains.
policy::Policy finetune_expert(const policy::Policy& backbone, Variant variant, const TrainConfig& cfg,
                               const MetricsSink& sink = {});

// Stage 3: each batch draws one of the 16 variants uniformly; only gate weights and the free
// adapter train.
policy::Policy train_unified(const policy::Policy& backbone, const std::vector<policy::Policy>& experts,
                             const TrainConfig& cfg, const MetricsSink& sink = {});

// Seeds of the evaluation/training streams, exposed for tests.
std::uint64_t stage_seed(std::uint64_t seed, int stage_id, int epoch, int batch);
int stage_id_for(const policy::Policy& policy);

}  // namespace mtvrp::training
