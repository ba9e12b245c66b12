#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <variant>
#include <vector>

#include "mtvrp/core/instance.hpp"

namespace mtvrp {

// Per-basis dynamic state. Each member of BasisStateSet is present iff its basis is active.
struct CapacityState {
  int remaining_lh = 0;
  friend bool operator==(const CapacityState&, const CapacityState&) = default;
};
struct OpenState {
  bool open = true;
  friend bool operator==(const OpenState&, const OpenState&) = default;
};
struct BackhaulState {
  int remaining_bh = 0;
  friend bool operator==(const BackhaulState&, const BackhaulState&) = default;
};
struct DurationState {
  double traveled = 0.0;
  friend bool operator==(const DurationState&, const DurationState&) = default;
};
struct TimeWindowState {
  double now = 0.0;
  friend bool operator==(const TimeWindowState&, const TimeWindowState&) = default;
};

struct BasisStateSet {
  CapacityState c;
  std::optional<OpenState> o;
  std::optional<BackhaulState> b;
  std::optional<DurationState> l;
  std::optional<TimeWindowState> tw;
  friend bool operator==(const BasisStateSet&, const BasisStateSet&) = default;
};

using BasisState = std::variant<CapacityState, OpenState, BackhaulState, DurationState, TimeWindowState>;

struct EnvState {
  int step = 0;
  int current = 0;
  std::vector<std::uint8_t> visited;
  int unvisited = 0;
  BasisStateSet basis;
  // Set once a backhaul customer is served in the current subtour.
  bool in_backhaul_phase = false;

  // All customers served and the vehicle is back at the depot (or anywhere, for open routes).
  bool terminal(const ProblemInstance& inst) const { return unvisited == 0 && (current == 0 || inst.open); }
  friend bool operator==(const EnvState&, const EnvState&) = default;
};

class ContractViolation : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

EnvState initial_state(const ProblemInstance& inst);

// Feasibility mask over nodes 0..N. Throws ContractViolation if no action is feasible.
std::vector<std::uint8_t> feasible_actions(const EnvState& state, const ProblemInstance& inst);
// Same, written into a caller-owned buffer of size N+1. Returns the number of feasible actions.
int feasible_actions(const EnvState& state, const ProblemInstance& inst, std::uint8_t* mask);

// Advances by one action. Throws ContractViolation if the action is infeasible.
EnvState step(const EnvState& state, int action, const ProblemInstance& inst);
// In-place variant without the feasibility check; the caller guarantees feasibility.
void apply_action(EnvState& state, int action, const ProblemInstance& inst);

// Per-basis transition functions. Each depends only on its own previous member and the action.
CapacityState next_capacity(const CapacityState& s, int from, int action, const ProblemInstance& inst);
OpenState next_open(const OpenState& s, int from, int action, const ProblemInstance& inst);
BackhaulState next_backhaul(const BackhaulState& s, int from, int action, const ProblemInstance& inst);
DurationState next_duration(const DurationState& s, int from, int action, const ProblemInstance& inst);
TimeWindowState next_time_window(const TimeWindowState& s, int from, int action, const ProblemInstance& inst);

// Active basis members in canonical order C, O, B, L, TW.
std::vector<BasisState> decompose_state(const EnvState& state);
BasisStateSet assemble_basis(const std::vector<BasisState>& parts);

// Applies the k-th symmetry of the unit square to all coordinates; k = 0 is the identity.
ProblemInstance dihedral_augment(const ProblemInstance& inst, int k);

}  // namespace mtvrp
