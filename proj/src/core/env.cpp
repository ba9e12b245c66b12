#include "mtvrp/core/env.hpp"

#include <algorithm>
#include <cstdlib>
#include <string>

namespace mtvrp {

EnvState initial_state(const ProblemInstance& inst) {
  EnvState s;
  s.visited.assign(inst.num_nodes(), 0);
  s.unvisited = inst.num_customers();
  s.basis.c.remaining_lh = inst.capacity;
  const Variant& v = inst.variant;
  if (v.open) s.basis.o = OpenState{inst.open};
  if (v.backhaul) s.basis.b = BackhaulState{inst.capacity};
  if (v.duration_limit) s.basis.l = DurationState{0.0};
  if (v.time_window) s.basis.tw = TimeWindowState{0.0};
  return s;
}

int feasible_actions(const EnvState& s, const ProblemInstance& inst, std::uint8_t* mask) {
  const int n1 = inst.num_nodes();
  const int i = s.current;
  const bool closed = !inst.open;
  const double now = s.basis.tw ? s.basis.tw->now : 0.0;
  const double traveled = s.basis.l ? s.basis.l->traveled : 0.0;
  const double w0_end = inst.system_end();

  int count = 0;
  // Depot: forbidden from the depot while customers remain, always allowed otherwise.
  mask[0] = (i != 0 || s.unvisited == 0) ? 1 : 0;
  count += mask[0];

  for (int j = 1; j < n1; ++j) {
    mask[j] = 0;
    if (s.visited[j]) continue;
    const bool bh = inst.backhaul[j] < 0;
    if (bh) {
      if (s.basis.b && -inst.backhaul[j] > s.basis.b->remaining_bh) continue;
    } else {
      if (s.in_backhaul_phase) continue;
      if (inst.linehaul[j] > s.basis.c.remaining_lh) continue;
    }
    const double d_ij = inst.dist(i, j);
    if (s.basis.tw) {
      const double arrive = now + d_ij;
      if (arrive > inst.tw_end[j] + kFeasEps) continue;
      if (closed) {
        const double done = std::max(arrive, inst.tw_beg[j]) + inst.tw_dur[j];
        if (done + inst.dist(j, 0) > w0_end + kFeasEps) continue;
      }
    }
    if (s.basis.l) {
      if (traveled + d_ij > inst.dur_limit + kFeasEps) continue;
      if (closed && traveled + d_ij + inst.dist(j, 0) > inst.dur_limit + kFeasEps) continue;
    }
    mask[j] = 1;
    ++count;
  }
  return count;
}

std::vector<std::uint8_t> feasible_actions(const EnvState& state, const ProblemInstance& inst) {
  std::vector<std::uint8_t> mask(inst.num_nodes(), 0);
  if (feasible_actions(state, inst, mask.data()) == 0) {
    throw ContractViolation("no feasible action at step " + std::to_string(state.step));
  }
  return mask;
}

CapacityState next_capacity(const CapacityState& s, int /*from*/, int action, const ProblemInstance& inst) {
  if (action == 0) return CapacityState{inst.capacity};
  return CapacityState{s.remaining_lh - inst.linehaul[action]};
}

OpenState next_open(const OpenState& s, int, int, const ProblemInstance&) { return s; }

BackhaulState next_backhaul(const BackhaulState& s, int, int action, const ProblemInstance& inst) {
  if (action == 0) return BackhaulState{inst.capacity};
  return BackhaulState{s.remaining_bh + inst.backhaul[action]};
}

DurationState next_duration(const DurationState& s, int from, int action, const ProblemInstance& inst) {
  if (action == 0) return DurationState{0.0};
  return DurationState{s.traveled + inst.dist(from, action)};
}

TimeWindowState next_time_window(const TimeWindowState& s, int from, int action, const ProblemInstance& inst) {
  if (action == 0) return TimeWindowState{0.0};
  return TimeWindowState{std::max(s.now + inst.dist(from, action), inst.tw_beg[action]) + inst.tw_dur[action]};
}

void apply_action(EnvState& s, int action, const ProblemInstance& inst) {
  const int from = s.current;
  BasisStateSet& b = s.basis;
  b.c = next_capacity(b.c, from, action, inst);
  if (b.o) b.o = next_open(*b.o, from, action, inst);
  if (b.b) b.b = next_backhaul(*b.b, from, action, inst);
  if (b.l) b.l = next_duration(*b.l, from, action, inst);
  if (b.tw) b.tw = next_time_window(*b.tw, from, action, inst);
  if (action == 0) {
    s.in_backhaul_phase = false;
  } else {
    if (inst.backhaul[action] < 0) s.in_backhaul_phase = true;
    s.visited[action] = 1;
    --s.unvisited;
  }
  s.current = action;
  ++s.step;
}

EnvState step(const EnvState& state, int action, const ProblemInstance& inst) {
  if (action < 0 || action >= inst.num_nodes()) {
    throw ContractViolation("action " + std::to_string(action) + " out of range");
  }
  std::vector<std::uint8_t> mask(inst.num_nodes(), 0);
  feasible_actions(state, inst, mask.data());
  if (!mask[action]) throw ContractViolation("infeasible action " + std::to_string(action));
  EnvState next = state;
  apply_action(next, action, inst);
  return next;
}

std::vector<BasisState> decompose_state(const EnvState& state) {
  std::vector<BasisState> out;
  out.emplace_back(state.basis.c);
  if (state.basis.o) out.emplace_back(*state.basis.o);
  if (state.basis.b) out.emplace_back(*state.basis.b);
  if (state.basis.l) out.emplace_back(*state.basis.l);
  if (state.basis.tw) out.emplace_back(*state.basis.tw);
  return out;
}

BasisStateSet assemble_basis(const std::vector<BasisState>& parts) {
  BasisStateSet out;
  for (const auto& p : parts) {
    std::visit(
        [&](const auto& m) {
          using T = std::decay_t<decltype(m)>;
          if constexpr (std::is_same_v<T, CapacityState>) out.c = m;
          if constexpr (std::is_same_v<T, OpenState>) out.o = m;
          if constexpr (std::is_same_v<T, BackhaulState>) out.b = m;
          if constexpr (std::is_same_v<T, DurationState>) out.l = m;
          if constexpr (std::is_same_v<T, TimeWindowState>) out.tw = m;
        },
        p);
  }
  return out;
}

ProblemInstance dihedral_augment(const ProblemInstance& inst, int k) {
  if (k < 0 || k > 7) throw std::invalid_argument("dihedral_augment: k must be in 0..7");
  ProblemInstance out = inst;
  for (auto& p : out.coords) {
    const double x = p.x, y = p.y;
    switch (k) {
      case 0: break;
      case 1: p = {y, x}; break;
      case 2: p = {1.0 - x, y}; break;
      case 3: p = {x, 1.0 - y}; break;
      case 4: p = {1.0 - x, 1.0 - y}; break;
      case 5: p = {y, 1.0 - x}; break;
      case 6: p = {1.0 - y, x}; break;
      case 7: p = {1.0 - y, 1.0 - x}; break;
    }
  }
  return out;
}

}  // namespace mtvrp
