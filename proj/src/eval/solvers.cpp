#include "mtvrp/eval/solvers.hpp"

#include <cmath>
#include <limits>
#include <vector>

#include "mtvrp/core/env.hpp"

namespace mtvrp::eval {

namespace {

// Leg cost seen by the search; kept separate from tour_cost so the two can check each other.
double leg(const ProblemInstance& inst, int a, int b) {
  if (b == 0 && inst.open) return 0.0;
  const double dx = inst.coords[a].x - inst.coords[b].x;
  const double dy = inst.coords[a].y - inst.coords[b].y;
  return std::sqrt(dx * dx + dy * dy);
}

struct Search {
  const ProblemInstance& inst;
  std::vector<int> path;
  std::vector<int> best_path;
  double best = std::numeric_limits<double>::infinity();

  void dfs(const EnvState& s, double cost) {
    if (s.terminal(inst)) {
      double total = cost;
      if (s.current != 0) total += leg(inst, s.current, 0);
      if (total < best) {
        best = total;
        best_path = path;
        if (s.current != 0) best_path.push_back(0);
      }
      return;
    }
    std::vector<std::uint8_t> mask(inst.num_nodes());
    feasible_actions(s, inst, mask.data());
    for (int a = 0; a < inst.num_nodes(); ++a) {
      if (!mask[a]) continue;
      const double c = cost + leg(inst, s.current, a);
      if (c >= best) continue;
      EnvState next = s;
      apply_action(next, a, inst);
      path.push_back(a);
      dfs(next, c);
      path.pop_back();
    }
  }
};

}  // namespace

Tour exhaustive_solve(const ProblemInstance& inst) {
  if (inst.num_customers() > kExhaustiveMaxCustomers) {
    throw std::invalid_argument("exhaustive_solve handles at most " + std::to_string(kExhaustiveMaxCustomers) +
                                " customers, got " + std::to_string(inst.num_customers()));
  }
  if (inst.num_customers() == 0) return Tour{{0}, 0.0};
  // Seeding the bound with the heuristic only prunes; ties keep the heuristic tour.
  Tour seed = nearest_feasible(inst);
  Search s{inst, {0}, seed.nodes, seed.cost + 1e-12};
  s.dfs(initial_state(inst), 0.0);
  Tour t{s.best_path, 0.0};
  t.cost = tour_cost(inst, t);
  return t;
}

Tour nearest_feasible(const ProblemInstance& inst) {
  Tour t{{0}, 0.0};
  EnvState s = initial_state(inst);
  std::vector<std::uint8_t> mask(inst.num_nodes());
  while (!s.terminal(inst)) {
    feasible_actions(s, inst, mask.data());
    int pick = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int j = 1; j < inst.num_nodes(); ++j) {
      if (mask[j] && inst.dist(s.current, j) < best) {
        best = inst.dist(s.current, j);
        pick = j;
      }
    }
    if (pick < 0) {
      if (!mask[0]) throw ContractViolation("nearest_feasible: no feasible action");
      pick = 0;
    }
    apply_action(s, pick, inst);
    t.nodes.push_back(pick);
  }
  if (t.nodes.back() != 0) t.nodes.push_back(0);
  t.cost = tour_cost(inst, t);
  return t;
}

}  // namespace mtvrp::eval
