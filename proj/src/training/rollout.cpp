#include "mtvrp/training/rollout.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <functional>
#include <thread>

#include "mtvrp/core/env.hpp"

namespace mtvrp::training {

std::vector<int> forced_starts(const ProblemInstance& inst, int starts) {
  if (starts < 1) throw std::invalid_argument("need at least one start");
  if (starts == 1) return {};
  if (starts > inst.num_customers()) {
    throw std::invalid_argument("cannot force " + std::to_string(starts) + " distinct starts on " +
                                std::to_string(inst.num_customers()) + " customers");
  }
  std::vector<int> out(starts);
  for (int m = 0; m < starts; ++m) out[m] = m + 1;
  return out;
}

namespace {

int sample_action(std::span<const double> log_probs, std::span<const std::uint8_t> mask, Rng& rng) {
  const double u = rng.uniform01();
  double acc = 0.0;
  int last = -1;
  for (std::size_t i = 0; i < log_probs.size(); ++i) {
    if (!mask[i]) continue;
    acc += std::exp(log_probs[i]);
    last = static_cast<int>(i);
    if (u < acc) return last;
  }
  if (last < 0) throw ContractViolation("sample_action: no feasible node");
  return last;  // rounding left u above the cumulative sum
}

}  // namespace

InstanceRollout decode_instance(policy::ForwardContext& ctx, const ProblemInstance& inst, int starts,
                                DecodeMode mode, Rng& rng, RecordedSteps* record) {
  const int n1 = inst.num_nodes();
  const auto forced = forced_starts(inst, starts);

  InstanceRollout out;
  std::vector<EnvState> states;
  std::vector<std::uint8_t> mask(n1);
  if (forced.empty()) {
    states.push_back(initial_state(inst));
    out.trajectories.push_back(Trajectory{-1, Tour{{0}, 0.0}, 0.0});
  } else {
    for (int s : forced) {
      EnvState st = initial_state(inst);
      feasible_actions(st, inst, mask.data());
      if (!mask[s]) {
        out.dropped.push_back(s);
        continue;
      }
      apply_action(st, s, inst);
      states.push_back(st);
      out.trajectories.push_back(Trajectory{s, Tour{{0, s}, 0.0}, 0.0});
    }
  }
  if (states.empty()) return out;

  policy::DecoderCache cache = policy::prepare_decoder(ctx, policy::encode(ctx, inst));
  std::vector<int> active, current, actions;
  std::vector<std::uint8_t> step_mask;
  for (;;) {
    active.clear();
    for (int m = 0; m < static_cast<int>(states.size()); ++m) {
      if (!states[m].terminal(inst)) active.push_back(m);
    }
    if (active.empty()) break;
    const int rows = static_cast<int>(active.size());
    current.resize(rows);
    step_mask.assign(static_cast<std::size_t>(rows) * n1, 0);
    ad::Tensor dyn({rows, policy::kDynamicFeatures});
    for (int r = 0; r < rows; ++r) {
      const EnvState& st = states[active[r]];
      current[r] = st.current;
      if (feasible_actions(st, inst, step_mask.data() + static_cast<std::size_t>(r) * n1) == 0) {
        throw ContractViolation("no feasible action at node " + std::to_string(st.current) +
                                " with unserved customers");
      }
      const auto f = policy::dynamic_features(st, inst);
      for (int c = 0; c < policy::kDynamicFeatures; ++c) dyn.at(r, c) = f[c];
    }
    ad::Var lp = policy::decode_step(ctx, cache, current, dyn, step_mask);
    const ad::Tensor& lpv = lp.value();
    actions.resize(rows);
    for (int r = 0; r < rows; ++r) {
      std::span<const double> row(lpv.data() + static_cast<std::size_t>(r) * n1, n1);
      std::span<const std::uint8_t> mrow(step_mask.data() + static_cast<std::size_t>(r) * n1, n1);
      actions[r] = mode == DecodeMode::greedy ? policy::greedy_action(row, mrow) : sample_action(row, mrow, rng);
      Trajectory& t = out.trajectories[active[r]];
      t.log_prob += row[actions[r]];
      t.tour.nodes.push_back(actions[r]);
      apply_action(states[active[r]], actions[r], inst);
    }
    if (record) {
      record->log_probs.push_back(ad::gather(lp, actions));
      record->rows.push_back(active);
    }
  }
  for (Trajectory& t : out.trajectories) {
    if (t.tour.nodes.back() != 0) t.tour.nodes.push_back(0);  // open route: free return leg
    t.tour.cost = tour_cost(inst, t.tour);
  }
  return out;
}

InstanceRollout rollout(const policy::Policy& policy, const ProblemInstance& inst, int starts, DecodeMode mode,
                        std::uint64_t seed, policy::GateStats* stats) {
  ad::Tape tape;
  policy::ForwardContext ctx(tape, policy, inst.variant);
  ctx.set_no_grad(true);
  ctx.set_gate_stats(stats);
  Rng rng(seed);
  return decode_instance(ctx, inst, starts, mode, rng, nullptr);
}

RolloutBatch rollout(const policy::Policy& policy, const std::vector<ProblemInstance>& instances, int starts,
                     DecodeMode mode, std::uint64_t seed, int jobs) {
  RolloutBatch b;
  b.instances = instances;
  b.rollouts.resize(instances.size());
  parallel_for(static_cast<int>(instances.size()), jobs, [&](int i) {
    b.rollouts[i] = rollout(policy, instances[i], starts, mode, Rng::derive(seed, {static_cast<std::uint64_t>(i)}).next());
  });
  return b;
}

const Trajectory& best_trajectory(const InstanceRollout& r) {
  if (r.trajectories.empty()) throw std::invalid_argument("rollout has no surviving trajectory");
  const Trajectory* best = &r.trajectories[0];
  for (const auto& t : r.trajectories) {
    if (t.tour.cost < best->tour.cost) best = &t;
  }
  return *best;
}

void parallel_for(int count, int jobs, const std::function<void(int)>& fn) {
  if (count <= 0) return;
  jobs = std::max(1, std::min(jobs, count));
  if (jobs == 1) {
    for (int i = 0; i < count; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(count);
  std::atomic<int> next{0};
  std::vector<std::thread> pool;
  for (int w = 0; w < jobs; ++w) {
    pool.emplace_back([&] {
      for (int i = next++; i < count; i = next++) {
        try {
          fn(i);
        } catch (...) {
          errors[i] = std::current_exception();
        }
      }
    });
  }
  for (auto& t : pool) t.join();
  for (auto& e : errors) {
    if (e) std::rethrow_exception(e);
  }
}

}  // namespace mtvrp::training
