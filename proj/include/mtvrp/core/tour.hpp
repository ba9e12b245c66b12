#pragma once

#include <array>
#include <string>
#include <vector>

#include "mtvrp/core/instance.hpp"

namespace mtvrp {

// Node sequence starting and ending at the depot; 0 separates subtours, e.g. 0 1 2 0 3 0.
struct Tour {
  std::vector<int> nodes;
  double cost = 0.0;
  friend bool operator==(const Tour&, const Tour&) = default;
};

// Total traversed length. Customer->depot legs are free when the instance is open.
double tour_cost(const ProblemInstance& inst, const std::vector<int>& nodes);
inline double tour_cost(const ProblemInstance& inst, const Tour& tour) { return tour_cost(inst, tour.nodes); }

// Splits a node sequence into customer lists, one per subtour.
std::vector<std::vector<int>> subtours(const std::vector<int>& nodes);

enum class Rule : int {
  visit_once = 1,     // structure: depot-delimited, every customer exactly once
  time_window = 2,    // arrival no later than the window end
  length_limit = 3,   // subtour length within the duration limit
  return_depot = 4,   // closed routes: back by the system end, return leg within the limit
  capacity_order = 5  // linehaul/backhaul capacity and linehauls-before-backhauls
};

struct RuleResult {
  bool ok = true;
  int position = -1;  // index into Tour::nodes of the first violation
  std::string detail;
};

struct ValidationReport {
  std::array<RuleResult, 5> rules;  // indexed by Rule - 1
  bool ok() const;
  const RuleResult& operator[](Rule r) const { return rules[static_cast<int>(r) - 1]; }
  std::string summary() const;
};

// Checks a tour against the feasibility rules by replaying it from scratch, without the
// environment state machine.
ValidationReport validate_tour(const ProblemInstance& inst, const Tour& tour);

}  // namespace mtvrp
