#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "mtvrp/core/instance.hpp"
#include "mtvrp/core/tour.hpp"
#include "mtvrp/policy/model.hpp"

namespace mtvrp::eval {

// Reference solver used for gaps. Exhaustive search only applies to small instances.
enum class Reference { automatic, exhaustive, nearest_feasible, none };
inline constexpr int kAutoExhaustiveMax = 8;

struct EvalOptions {
  int starts = 20;  // clamped to the customer count
  int aug = 8;      // 1 or 8
  int jobs = 1;
  Reference reference = Reference::automatic;
  bool timing = true;        // false zeroes wall times so reports compare byte for byte
  bool gate_stats = false;   // record mean routed coefficients (unified policies only)
};

struct InstanceEval {
  Variant variant;
  Tour tour;                // best tour, node indices of the original instance
  double cost = 0.0;        // on the original instance
  double ref_cost = 0.0;    // NaN without a reference
  std::string reference;    // "exhaustive", "nearest_feasible" or "none"
  bool valid = false;
  int aug = 0;              // dihedral map that produced the best tour
};

struct VariantRow {
  std::string variant;
  int count = 0;
  double mean_cost = 0.0;
  double mean_gap = 0.0;  // fraction; NaN without a reference
  double wall_time = 0.0;
  std::string reference;  // one tag, or "mixed"
  std::optional<std::array<double, 5>> gate_mean;
};

struct EvalReport {
  std::vector<VariantRow> rows;  // in the fixed variant order
  std::vector<InstanceEval> instances;
  int invalid_tours = 0;
};

// Best of aug x starts greedy rollouts per instance; every candidate tour is validated.
EvalReport evaluate(const policy::Policy& policy, const std::vector<ProblemInstance>& dataset,
                    const EvalOptions& opt = {});

// Same layout for a policy-free solver (reference solvers themselves).
enum class Solver { exhaustive, nearest_feasible };
EvalReport evaluate_solver(Solver solver, const std::vector<ProblemInstance>& dataset, const EvalOptions& opt = {});

// Reference cost of one instance (NaN for Reference::none); `tag` receives the solver used.
double reference_cost(const ProblemInstance& inst, Reference ref, std::string* tag = nullptr);

enum class ReportFormat { table, csv };
// Columns: variant, cost, gap, time (+ count, reference). Gap is printed with 4 significant
// digits and a % sign.
std::string emit_report(const EvalReport& report, ReportFormat format);
std::string report_json(const EvalReport& report);
std::string format_gap(double gap);

}  // namespace mtvrp::eval
