#include "mtvrp/core/tour.hpp"

#include <algorithm>
#include <sstream>

namespace mtvrp {

double tour_cost(const ProblemInstance& inst, const std::vector<int>& nodes) {
  double cost = 0.0;
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    const int a = nodes[k - 1], b = nodes[k];
    if (inst.open && b == 0) continue;
    cost += inst.dist(a, b);
  }
  return cost;
}

std::vector<std::vector<int>> subtours(const std::vector<int>& nodes) {
  std::vector<std::vector<int>> out;
  std::vector<int> cur;
  for (int v : nodes) {
    if (v == 0) {
      if (!cur.empty()) out.push_back(std::move(cur));
      cur.clear();
    } else {
      cur.push_back(v);
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

bool ValidationReport::ok() const {
  return std::all_of(rules.begin(), rules.end(), [](const RuleResult& r) { return r.ok; });
}

std::string ValidationReport::summary() const {
  std::ostringstream os;
  for (int r = 0; r < 5; ++r) {
    os << "rule " << (r + 1) << ": " << (rules[r].ok ? "pass" : "FAIL");
    if (!rules[r].ok) os << " at position " << rules[r].position << " (" << rules[r].detail << ")";
    os << '\n';
  }
  return os.str();
}

namespace {

void fail(RuleResult& r, int pos, std::string detail) {
  if (!r.ok) return;
  r.ok = false;
  r.position = pos;
  r.detail = std::move(detail);
}

}  // namespace

ValidationReport validate_tour(const ProblemInstance& inst, const Tour& tour) {
  ValidationReport rep;
  auto& r1 = rep.rules[0];
  auto& r2 = rep.rules[1];
  auto& r3 = rep.rules[2];
  auto& r4 = rep.rules[3];
  auto& r5 = rep.rules[4];
  const auto& nodes = tour.nodes;
  const int n1 = inst.num_nodes();

  if (inst.num_customers() == 0) {
    for (std::size_t k = 0; k < nodes.size(); ++k) {
      if (nodes[k] != 0) fail(r1, static_cast<int>(k), "node in a customer-free instance");
    }
    return rep;
  }
  if (nodes.size() < 2 || nodes.front() != 0 || nodes.back() != 0) {
    fail(r1, 0, "tour must start and end at the depot");
    return rep;
  }
  std::vector<int> seen(n1, 0);
  for (std::size_t k = 0; k < nodes.size(); ++k) {
    const int v = nodes[k];
    if (v < 0 || v >= n1) {
      fail(r1, static_cast<int>(k), "node index out of range");
      return rep;
    }
    if (v == 0) {
      if (k > 0 && nodes[k - 1] == 0) fail(r1, static_cast<int>(k), "empty subtour");
    } else if (++seen[v] > 1) {
      fail(r1, static_cast<int>(k), "customer " + std::to_string(v) + " visited twice");
    }
  }
  for (int j = 1; j < n1; ++j) {
    if (seen[j] == 0) fail(r1, static_cast<int>(nodes.size()) - 1, "customer " + std::to_string(j) + " never visited");
  }

  // Replay each subtour with fresh clock, odometer and loads.
  const bool tw = inst.variant.time_window;
  const bool lim = inst.variant.duration_limit;
  double clock = 0.0, length = 0.0;
  int lh_load = 0, bh_load = 0;
  bool seen_backhaul = false;
  for (std::size_t k = 1; k < nodes.size(); ++k) {
    const int prev = nodes[k - 1], v = nodes[k];
    const int pos = static_cast<int>(k);
    if (v == 0) {
      if (!inst.open && prev != 0) {
        const double back = inst.dist(prev, 0);
        if (tw && clock + back > inst.system_end() + kFeasEps) fail(r4, pos, "returns after the system end time");
        if (lim && length + back > inst.dur_limit + kFeasEps) fail(r4, pos, "subtour with return exceeds the limit");
      }
      clock = 0.0;
      length = 0.0;
      lh_load = 0;
      bh_load = 0;
      seen_backhaul = false;
      continue;
    }
    const double leg = inst.dist(prev, v);
    const double arrive = clock + leg;
    if (tw && arrive > inst.tw_end[v] + kFeasEps) fail(r2, pos, "arrives after the window closes");
    clock = std::max(arrive, inst.tw_beg[v]) + inst.tw_dur[v];
    length += leg;
    if (lim && length > inst.dur_limit + kFeasEps) fail(r3, pos, "subtour exceeds the duration limit");
    if (inst.backhaul[v] < 0) {
      seen_backhaul = true;
      bh_load += -inst.backhaul[v];
      if (bh_load > inst.capacity) fail(r5, pos, "backhaul load exceeds capacity");
    } else {
      if (seen_backhaul) fail(r5, pos, "linehaul served after a backhaul");
      lh_load += inst.linehaul[v];
      if (lh_load > inst.capacity) fail(r5, pos, "linehaul load exceeds capacity");
    }
  }
  return rep;
}

}  // namespace mtvrp
