#include <gtest/gtest.h>

#include <cmath>
#include <numeric>
#include <set>

#include "mtvrp/core/generate.hpp"
#include "mtvrp/policy/checkpoint.hpp"
#include "mtvrp/training/config.hpp"
#include "mtvrp/training/gradcheck.hpp"
#include "mtvrp/training/rollout.hpp"
#include "mtvrp/training/trainer.hpp"
#include "support/oracles.hpp"

namespace mtvrp::training {
namespace {

using policy::Policy;

policy::ModelConfig tiny_model() {
  policy::ModelConfig c;
  c.d_model = 16;
  c.n_heads = 2;
  c.n_layers = 1;
  c.d_ff = 32;
  c.rank_frozen = 4;
  c.rank_free = 4;
  return c;
}

TrainConfig tiny_train() {
  TrainConfig c;
  c.epochs = 1;
  c.instances_per_epoch = 8;
  c.batch_size = 4;
  c.n = 6;
  c.starts = 6;
  c.lr = 1e-3;
  return c;
}

std::vector<ProblemInstance> batch_of(const char* variant, int count, int n, std::uint64_t seed) {
  std::vector<ProblemInstance> out;
  for (int k = 0; k < count; ++k) out.push_back(sample_instance(n, Variant::parse(variant), instance_seed(seed, k)));
  return out;
}

// Baseline and estimator

TEST(Baseline, SharedMeanAdvantages) {
  EXPECT_EQ(shared_baseline_advantages({1.0, 3.0}), (std::vector<double>{-1.0, 1.0}));
  EXPECT_EQ(shared_baseline_advantages({2.5, 2.5, 2.5}), (std::vector<double>{0.0, 0.0, 0.0}));
  Rng rng(4);
  for (int trial = 0; trial < 200; ++trial) {
    std::vector<double> c(2 + trial % 30);
    for (auto& v : c) v = rng.uniform(1, 20);
    const auto a = shared_baseline_advantages(c);
    EXPECT_NEAR(std::accumulate(a.begin(), a.end(), 0.0), 0.0, 1e-12);
  }
}

// Two-parameter toy policy on a two-customer instance: from the depot, customer 1 has logit
// theta0 and customer 2 logit 0; from a customer with the other still unserved, the depot has
// logit theta1 and the other customer 0. Every other move is forced.
TEST(Estimator, ScoreFunctionMatchesExactGradient) {
  auto inst = testing::blank_instance(Variant::parse("CVRP"), {{0.1, 0.1}, {0.9, 0.2}, {0.7, 0.8}});
  const std::vector<std::vector<int>> tours = {{0, 1, 2, 0}, {0, 1, 0, 2, 0}, {0, 2, 1, 0}, {0, 2, 0, 1, 0}};
  const double theta[2] = {0.37, -0.81};

  ad::Tensor score_grad({1, 2}, 0.0), baselined({1, 2}, 0.0);
  double expected = 0.0;
  std::vector<double> probs, costs;
  std::vector<ad::Tensor> scores;
  for (const auto& t : tours) {
    ad::Tape tape;
    ad::Var th = tape.leaf(ad::Tensor({1, 2}, {theta[0], theta[1]}), true);
    EnvState s = initial_state(inst);
    std::vector<ad::Var> logps;
    for (std::size_t k = 1; k < t.size(); ++k) {
      const auto mask = feasible_actions(s, inst);
      if (std::count(mask.begin(), mask.end(), 1) > 1) {
        ad::Var z0 = ad::col(th, 0);
        ad::Var z1 = ad::col(th, 1);
        ad::Var zero = ad::scale(z0, 0.0);
        ad::Var logits = s.current == 0 ? ad::concat_cols({zero, z0, zero}) : ad::concat_cols({z1, zero, zero});
        const int pick[1] = {t[k]};
        logps.push_back(ad::gather(ad::masked_log_softmax(logits, mask), pick));
      }
      s = step(s, t[k], inst);
    }
    ad::Var lp = logps[0];
    for (std::size_t i = 1; i < logps.size(); ++i) lp = ad::add(lp, logps[i]);
    tape.backward(ad::sum(lp));
    probs.push_back(std::exp(lp.value().item()));
    costs.push_back(tour_cost(inst, t));
    scores.push_back(tape.grad(th));
    expected += probs.back() * costs.back();
  }
  for (std::size_t i = 0; i < tours.size(); ++i) {
    for (int c = 0; c < 2; ++c) {
      score_grad[c] += probs[i] * costs[i] * scores[i][c];
      baselined[c] += probs[i] * (costs[i] - expected) * scores[i][c];
    }
  }
  const double s0 = 1.0 / (1.0 + std::exp(-theta[0]));
  const double s1 = 1.0 / (1.0 + std::exp(-theta[1]));
  const double g0 = s0 * (1 - s0) * ((1 - s1) * costs[0] + s1 * costs[1] - (1 - s1) * costs[2] - s1 * costs[3]);
  const double g1 = s1 * (1 - s1) * (s0 * (costs[1] - costs[0]) + (1 - s0) * (costs[3] - costs[2]));
  EXPECT_NEAR(std::accumulate(probs.begin(), probs.end(), 0.0), 1.0, 1e-12);
  EXPECT_NEAR(score_grad[0], g0, 1e-10);
  EXPECT_NEAR(score_grad[1], g1, 1e-10);
  // A constant baseline leaves the expectation unchanged.
  EXPECT_NEAR(baselined[0], g0, 1e-10);
  EXPECT_NEAR(baselined[1], g1, 1e-10);
}

// Rollouts

TEST(Rollout, ForcedStarts) {
  const auto inst = sample_instance(4, Variant{}, 1);
  EXPECT_EQ(forced_starts(inst, 4), (std::vector<int>{1, 2, 3, 4}));
  EXPECT_TRUE(forced_starts(inst, 1).empty());
  EXPECT_THROW(forced_starts(inst, 5), std::invalid_argument);
  EXPECT_THROW(forced_starts(inst, 0), std::invalid_argument);

  const Policy p = Policy::init_backbone(tiny_model(), 1);
  const auto r = rollout(p, inst, 4, DecodeMode::greedy, 0);
  std::set<int> firsts;
  for (const auto& t : r.trajectories) firsts.insert(t.tour.nodes.at(1));
  EXPECT_EQ(firsts, (std::set<int>{1, 2, 3, 4}));
}

TEST(Rollout, GreedyRepeatsAndSamplesValidate) {
  const Policy p = Policy::init_backbone(tiny_model(), 2);
  for (const auto& v : all_variants()) {
    const auto inst = sample_instance(8, v, 3);
    const auto a = rollout(p, inst, 1, DecodeMode::greedy, 1);
    const auto b = rollout(p, inst, 1, DecodeMode::greedy, 2);
    ASSERT_EQ(a.trajectories.size(), 1u);
    EXPECT_EQ(a.trajectories[0].tour, b.trajectories[0].tour);
    const auto s = rollout(p, inst, 8, DecodeMode::sample, 5);
    for (const auto& t : s.trajectories) {
      EXPECT_TRUE(validate_tour(inst, t.tour).ok()) << v.name();
      EXPECT_NEAR(t.tour.cost, tour_cost(inst, t.tour), 1e-12);
      EXPECT_LE(t.log_prob, 0.0);
    }
  }
}

TEST(Rollout, InfeasibleForcedStartIsDropped) {
  // Both customers close before anyone can reach them.
  auto inst = testing::blank_instance(Variant::parse("VRPTW"), {{0.0, 0.0}, {0.9, 0.0}, {0.0, 0.8}});
  inst.tw_end = {100, 0.5, 0.5};
  const Policy p = Policy::init_backbone(tiny_model(), 3);
  const auto r = rollout(p, inst, 2, DecodeMode::sample, 1);
  EXPECT_EQ(r.dropped, (std::vector<int>{1, 2}));
  EXPECT_TRUE(r.trajectories.empty());

  // One start survives but the other customer can never be served.
  inst.tw_end = {100, 0.5, 5};
  EXPECT_THROW(rollout(p, inst, 2, DecodeMode::sample, 1), ContractViolation);
}

TEST(Rollout, BatchIndependentOfJobs) {
  const Policy p = Policy::init_backbone(tiny_model(), 4);
  const auto data = batch_of("VRPBTW", 6, 7, 8);
  const auto a = rollout(p, data, 7, DecodeMode::sample, 11, 1);
  const auto b = rollout(p, data, 7, DecodeMode::sample, 11, 3);
  for (std::size_t i = 0; i < data.size(); ++i) {
    ASSERT_EQ(a.rollouts[i].trajectories.size(), b.rollouts[i].trajectories.size());
    for (std::size_t m = 0; m < a.rollouts[i].trajectories.size(); ++m) {
      EXPECT_EQ(a.rollouts[i].trajectories[m].tour, b.rollouts[i].trajectories[m].tour);
      EXPECT_EQ(a.rollouts[i].trajectories[m].log_prob, b.rollouts[i].trajectories[m].log_prob);
    }
  }
}

TEST(Rollout, BestTrajectoryTieRule) {
  InstanceRollout r;
  r.trajectories = {Trajectory{1, Tour{{0, 1, 0}, 2.0}, 0}, Trajectory{2, Tour{{0, 2, 0}, 1.0}, 0},
                    Trajectory{3, Tour{{0, 3, 0}, 1.0}, 0}};
  EXPECT_EQ(best_trajectory(r).start, 2);
}

TEST(Rollout, ParallelForPropagatesFirstException) {
  std::vector<int> hits(20, 0);
  parallel_for(20, 4, [&](int i) { hits[i] = 1; });
  EXPECT_EQ(std::accumulate(hits.begin(), hits.end(), 0), 20);
  try {
    parallel_for(20, 4, [](int i) {
      if (i == 7 || i == 13) throw std::runtime_error(std::to_string(i));
    });
    FAIL();
  } catch (const std::runtime_error& e) {
    EXPECT_STREQ(e.what(), "7");
  }
}

// Gradient step

TEST(Reinforce, EqualCostsGiveZeroGradient) {
  // Every customer fills the vehicle, so every tour is a star with the same length.
  auto inst = testing::blank_instance(Variant::parse("CVRP"), {{0.5, 0.5}, {0.1, 0.2}, {0.8, 0.9}, {0.3, 0.7}}, 9);
  inst.linehaul = {0, 9, 9, 9};
  const Policy p = Policy::init_backbone(tiny_model(), 5);
  const auto g = reinforce_gradient(p, {inst, inst}, 3, 7);
  for (const auto& [name, t] : g.grads) {
    for (double v : t.vec()) EXPECT_LT(std::abs(v), 1e-12) << name;
  }
  EXPECT_LT(std::abs(g.metrics.loss), 1e-12);
}

// Exact expected cost of the policy on a two-customer instance with both forced starts.
double expected_cost(const Policy& p, const ProblemInstance& inst) {
  double total = 0.0;
  for (int s : {1, 2}) {
    const int other = 3 - s;
    const EnvState at = step(initial_state(inst), s, inst);
    const auto probs = policy::action_probabilities(p, inst, at);
    total += probs[0] * tour_cost(inst, std::vector<int>{0, s, 0, other, 0}) +
             probs[other] * tour_cost(inst, std::vector<int>{0, s, other, 0});
  }
  return total / 2.0;
}

TEST(Reinforce, StepReducesExpectedCost) {
  auto inst = testing::blank_instance(Variant::parse("CVRP"), {{0.05, 0.05}, {0.9, 0.85}, {0.95, 0.9}});
  const Policy p = Policy::init_backbone(tiny_model(), 6);
  const std::vector<ProblemInstance> batch(256, inst);
  const auto g = reinforce_gradient(p, batch, 2, 9);
  Policy q = p;
  for (auto& [name, param] : q.params()) {
    const auto& gt = g.grads.at(name);
    for (std::size_t i = 0; i < gt.size(); ++i) param.value[i] -= 0.05 * gt[i];
  }
  EXPECT_LT(expected_cost(q, inst), expected_cost(p, inst));
  // Visiting the close twin directly is the cheap choice; the step should make it likelier.
  const EnvState at = step(initial_state(inst), 1, inst);
  EXPECT_GT(policy::action_probabilities(q, inst, at)[2], policy::action_probabilities(p, inst, at)[2]);
}

TEST(Reinforce, GradientIndependentOfJobs) {
  const Policy bb = Policy::init_backbone(tiny_model(), 7);
  const auto data = batch_of("OVRPLTW", 5, 6, 3);
  const auto a = reinforce_gradient(bb, data, 4, 21, 1);
  const auto b = reinforce_gradient(bb, data, 4, 21, 3);
  EXPECT_EQ(a.grads, b.grads);
  EXPECT_EQ(a.metrics.loss, b.metrics.loss);
}

TEST(Reinforce, NeedsTwoStarts) {
  Policy p = Policy::init_backbone(tiny_model(), 1);
  Adam opt;
  EXPECT_THROW(reinforce_step(p, opt, batch_of("CVRP", 2, 5, 1), 1, 1e-3, 1), std::invalid_argument);
}

TEST(Reinforce, FrozenTensorsUntouched) {
  const Policy bb = Policy::init_backbone(tiny_model(), 8);
  std::vector<Policy> experts;
  for (Basis b : kExpertBases) experts.push_back(Policy::init_expert(bb, b, 2));
  Policy un = Policy::init_unified(bb, experts, 3);
  Policy ex = Policy::init_expert(bb, Basis::duration_limit, 4);
  for (Policy* p : {&ex, &un}) {
    const Policy before = *p;
    Adam opt(1e-6);
    for (int k = 0; k < 2; ++k) reinforce_step(*p, opt, batch_of("VRPLTW", 4, 6, k), 6, 1e-3, k);
    int changed = 0;
    for (const auto& [name, param] : p->params()) {
      if (param.frozen) {
        EXPECT_EQ(param.value, before.params().at(name).value) << name;
      } else if (!(param.value == before.params().at(name).value)) {
        ++changed;
      }
    }
    EXPECT_GT(changed, 0);
  }
}

TEST(Adam, FirstStepMovesByLearningRate) {
  policy::ParameterSet ps;
  ps.add("w", ad::Tensor({1, 3}, {1.0, -2.0, 0.5}), false);
  ps.add("frozen", ad::Tensor({1, 1}, {4.0}), true);
  std::map<std::string, ad::Tensor> g = {{"w", ad::Tensor({1, 3}, {0.2, -3.0, 0.0})},
                                         {"frozen", ad::Tensor({1, 1}, {1.0})}};
  Adam opt(0.0);
  opt.step(ps, g, 0.01);
  EXPECT_NEAR(ps.at("w").value[0], 0.99, 1e-9);
  EXPECT_NEAR(ps.at("w").value[1], -1.99, 1e-9);
  EXPECT_EQ(ps.at("w").value[2], 0.5);
  EXPECT_EQ(ps.at("frozen").value[0], 4.0);

  // Weight decay enters through the gradient: a zero gradient still shrinks the weight.
  policy::ParameterSet qs;
  qs.add("w", ad::Tensor({1, 1}, {2.0}), false);
  Adam decay(0.1);
  decay.step(qs, {}, 0.01);
  EXPECT_NEAR(qs.at("w").value[0], 1.99, 1e-9);
}

// Configuration

TEST(Config, PaperAndDeskProfiles) {
  const auto paper = paper_train_config();
  EXPECT_EQ(paper.epochs, 300);
  EXPECT_EQ(paper.instances_per_epoch, 100000);
  EXPECT_EQ(paper.batch_size, 256);
  EXPECT_EQ(paper.lr, 3e-4);
  EXPECT_EQ(paper.weight_decay, 1e-6);
  EXPECT_EQ(paper.lr_decay_epochs, (std::vector<int>{270, 295}));
  const auto desk = desk_train_config();
  EXPECT_EQ(desk.n, 20);
  EXPECT_EQ(desk.starts, 20);
  EXPECT_EQ(desk.batch_size, 64);
  EXPECT_EQ(desk.epochs, 20);
  EXPECT_EQ(desk.instances_per_epoch, 2000);
  EXPECT_NO_THROW(validate(paper));
  EXPECT_NO_THROW(validate(desk));
}

TEST(Config, LearningRateSchedule) {
  const auto paper = paper_train_config();
  EXPECT_DOUBLE_EQ(learning_rate(paper, 0), 3e-4);
  EXPECT_DOUBLE_EQ(learning_rate(paper, 269), 3e-4);
  EXPECT_DOUBLE_EQ(learning_rate(paper, 270), 3e-5);
  EXPECT_NEAR(learning_rate(paper, 299), 3e-6, 1e-18);
}

TEST(Config, ValidationErrors) {
  TrainConfig c = desk_train_config();
  c.starts = 1;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = desk_train_config();
  c.starts = 21;
  EXPECT_THROW(validate(c), std::invalid_argument);
  c = desk_train_config();
  c.lr = 0;
  EXPECT_THROW(validate(c), std::invalid_argument);
}

TEST(Config, JsonRoundTripAndOverrides) {
  PipelineConfig cfg;
  cfg.train.epochs = 7;
  cfg.train.lr_decay_epochs = {3, 5};
  cfg.model.activation = policy::GateActivation::sigmoid;
  cfg.model.routing = policy::Routing::variant_exact;
  const auto text = serialize_config(cfg);
  const auto back = parse_config(text);
  EXPECT_EQ(back.train, cfg.train);
  EXPECT_EQ(back.model, cfg.model);

  const auto partial = parse_config(R"({"train": {"batch_size": 16}})", cfg);
  EXPECT_EQ(partial.train.batch_size, 16);
  EXPECT_EQ(partial.train.epochs, 7);
  EXPECT_THROW(parse_config(R"({"train": {"batchsize": 16}})"), std::invalid_argument);
  EXPECT_THROW(parse_config(R"({"optimizer": {}})"), std::invalid_argument);
  EXPECT_THROW(parse_config("not json"), std::invalid_argument);
}

// Stages

TEST(Stages, PretrainIsDeterministicAndReportsEpochs) {
  TrainConfig cfg = tiny_train();
  cfg.epochs = 2;
  std::vector<EpochMetrics> log;
  const Policy a = pretrain_backbone(tiny_model(), cfg, [&](const EpochMetrics& m) { log.push_back(m); });
  const Policy b = pretrain_backbone(tiny_model(), cfg);
  EXPECT_EQ(policy::serialize_checkpoint(a), policy::serialize_checkpoint(b));
  ASSERT_EQ(log.size(), 2u);
  EXPECT_EQ(log[0].stage, "backbone");
  EXPECT_EQ(log[1].epoch, 2);
  EXPECT_TRUE(log[0].mean_cost.count("CVRP"));
  const auto line = metrics_json_line(log[0]);
  for (const char* key : {"\"stage\"", "\"epoch\"", "\"mean_cost\"", "\"loss\"", "\"lr\"", "\"wall_time\""}) {
    EXPECT_NE(line.find(key), std::string::npos) << key;
  }
  EXPECT_EQ(line.find('\n'), std::string::npos);

  cfg.jobs = 3;
  EXPECT_EQ(policy::serialize_checkpoint(pretrain_backbone(tiny_model(), cfg)), policy::serialize_checkpoint(a));
}

TEST(Stages, FinetuneAndUnifiedKeepFrozenTensors) {
  const TrainConfig cfg = tiny_train();
  const Policy bb = pretrain_backbone(tiny_model(), cfg);
  EXPECT_THROW(finetune_expert(bb, Variant::parse("CVRP"), cfg), std::invalid_argument);
  EXPECT_THROW(finetune_expert(bb, Variant::parse("VRPBTW"), cfg), std::invalid_argument);
  std::vector<Policy> experts;
  std::vector<std::string> stages;
  for (const auto& v : {"OVRP", "VRPB", "VRPL", "VRPTW"}) {
    experts.push_back(finetune_expert(bb, Variant::parse(v), cfg,
                                      [&](const EpochMetrics& m) { stages.push_back(m.stage); }));
    for (const auto& name : bb.backbone_names()) {
      EXPECT_EQ(experts.back().params().at(name).value, bb.params().at(name).value);
    }
  }
  EXPECT_EQ(stages, (std::vector<std::string>{"expert:O", "expert:B", "expert:L", "expert:TW"}));
  std::set<std::string> seen;
  const Policy un = train_unified(bb, experts, cfg, [&](const EpochMetrics& m) {
    for (const auto& [k, v] : m.mean_cost) seen.insert(k);
  });
  EXPECT_FALSE(seen.empty());
  for (const auto& e : experts) {
    for (const auto& [name, p] : e.params()) EXPECT_EQ(un.params().at(name).value, p.value) << name;
  }
}

TEST(Stages, StageSeedsDiffer) {
  std::set<std::uint64_t> seeds;
  for (int s = 0; s < 6; ++s) {
    for (int e = 0; e < 3; ++e) {
      for (int b = 0; b < 3; ++b) seeds.insert(stage_seed(1, s, e, b));
    }
  }
  EXPECT_EQ(seeds.size(), 54u);
}

// Finite-difference check of the full policy graph (smaller sample than the acceptance run).
TEST(Gradcheck, PolicyGraphSuite) {
  GradcheckOptions opt;
  opt.entries_per_tensor = 3;
  const auto cases = policy_gradcheck_suite(opt);
  EXPECT_GE(cases.size(), 6u);
  for (const auto& c : cases) {
    EXPECT_LT(c.max_rel_error, 1e-4) << c.name << " worst " << c.worst_tensor;
    EXPECT_GT(c.entries, 0);
  }
}

}  // namespace
}  // namespace mtvrp::training
