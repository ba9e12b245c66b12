#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "mtvrp/core/variant.hpp"

namespace mtvrp {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

// Absolute slack used by every time/length feasibility comparison.
inline constexpr double kFeasEps = 1e-9;

struct Point {
  double x = 0.0;
  double y = 0.0;
  friend bool operator==(const Point&, const Point&) = default;
};

// Static attributes of one VRP instance. Node 0 is the depot; nodes 1..N are customers.
struct ProblemInstance {
  Variant variant;
  std::uint64_t seed = 0;
  std::vector<Point> coords;
  std::vector<int> linehaul;  // >= 0, index 0 is 0
  std::vector<int> backhaul;  // <= 0, index 0 is 0
  int capacity = 0;
  bool open = false;
  double dur_limit = kInf;
  std::vector<double> tw_beg;
  std::vector<double> tw_end;
  std::vector<double> tw_dur;

  int num_nodes() const { return static_cast<int>(coords.size()); }
  int num_customers() const { return num_nodes() - 1; }

  double dist(int i, int j) const {
    const double dx = coords[i].x - coords[j].x;
    const double dy = coords[i].y - coords[j].y;
    return std::sqrt(dx * dx + dy * dy);
  }

  // System end time w0_end (infinite when time windows are inactive).
  double system_end() const { return tw_end.empty() ? kInf : tw_end[0]; }

  bool is_backhaul_customer(int j) const { return backhaul[j] < 0; }

  friend bool operator==(const ProblemInstance&, const ProblemInstance&) = default;
};

// Checks the structural invariants (sizes, ranges, mutual exclusivity, inactive defaults).
// Throws std::invalid_argument describing the first violation.
void check_instance(const ProblemInstance& inst);

}  // namespace mtvrp
