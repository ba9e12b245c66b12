#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <vector>

#include "mtvrp/autodiff/tape.hpp"
#include "mtvrp/core/instance.hpp"
#include "mtvrp/core/rng.hpp"
#include "mtvrp/core/tour.hpp"
#include "mtvrp/policy/model.hpp"

namespace mtvrp::training {

enum class DecodeMode { sample, greedy };

struct Trajectory {
  int start = -1;  // forced first customer, -1 when the first move was the policy's choice
  Tour tour;
  double log_prob = 0.0;  // sum over decoded (non-forced) steps
};

struct InstanceRollout {
  std::vector<Trajectory> trajectories;  // surviving starts, in start order
  std::vector<int> dropped;              // forced starts whose first move was infeasible
};

struct RolloutBatch {
  std::vector<ProblemInstance> instances;
  std::vector<InstanceRollout> rollouts;
};

// Log-probability terms recorded on a tape while decoding: one [rows, 1] column of chosen-action
// log-probabilities per step, plus the trajectory each row belongs to.
struct RecordedSteps {
  std::vector<ad::Var> log_probs;
  std::vector<std::vector<int>> rows;
};

// First customers forced for `starts` trajectories: customers 1..starts, or nothing for one start.
// Throws std::invalid_argument when starts < 1 or starts > number of customers (and starts > 1).
std::vector<int> forced_starts(const ProblemInstance& inst, int starts);

// Decodes all trajectories of one instance on `ctx`'s tape. Sampling draws from `rng` in
// (step, trajectory) order; greedy ignores it. When `record` is non-null the chosen-action
// log-probabilities stay on the tape for a later backward pass.
InstanceRollout decode_instance(policy::ForwardContext& ctx, const ProblemInstance& inst, int starts,
                                DecodeMode mode, Rng& rng, RecordedSteps* record = nullptr);

// Inference-only rollout of one instance (no gradients).
InstanceRollout rollout(const policy::Policy& policy, const ProblemInstance& inst, int starts, DecodeMode mode,
                        std::uint64_t seed, policy::GateStats* stats = nullptr);

// Rollout of many instances; instance i samples with Rng::derive(seed, {i}). Deterministic for any jobs.
RolloutBatch rollout(const policy::Policy& policy, const std::vector<ProblemInstance>& instances, int starts,
                     DecodeMode mode, std::uint64_t seed, int jobs = 1);

// Best (lowest cost) trajectory, lowest start index on ties.
const Trajectory& best_trajectory(const InstanceRollout& r);

// Runs fn(i) for i in [0, count) on up to `jobs` threads. Exceptions propagate (first by index).
void parallel_for(int count, int jobs, const std::function<void(int)>& fn);

}  // namespace mtvrp::training
