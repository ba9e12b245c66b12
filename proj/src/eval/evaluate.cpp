#include "mtvrp/eval/evaluate.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <limits>
#include <map>
#include <sstream>

#include "json.hpp"
#include "mtvrp/core/env.hpp"
#include "mtvrp/eval/solvers.hpp"
#include "mtvrp/training/rollout.hpp"

namespace mtvrp::eval {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

EvalReport assemble(std::vector<InstanceEval> per, const std::vector<double>& times,
                    const std::vector<std::optional<policy::GateStats>>& gates, const EvalOptions& opt) {
  EvalReport rep;
  std::map<int, VariantRow> rows;
  std::map<int, policy::GateStats> gate_acc;
  std::map<int, int> gap_count;
  for (std::size_t i = 0; i < per.size(); ++i) {
    const InstanceEval& e = per[i];
    const int key = e.variant.bits();
    VariantRow& r = rows[key];
    if (r.count == 0) {
      r.variant = e.variant.name();
      r.reference = e.reference;
    } else if (r.reference != e.reference) {
      r.reference = "mixed";
    }
    ++r.count;
    r.mean_cost += e.cost;
    if (!std::isnan(e.ref_cost)) {
      r.mean_gap += (e.cost - e.ref_cost) / e.ref_cost;
      ++gap_count[key];
    }
    if (opt.timing) r.wall_time += times[i];
    if (!e.valid) ++rep.invalid_tours;
    if (gates[i]) gate_acc[key].merge(*gates[i]);
  }
  for (const Variant& v : all_variants()) {
    auto it = rows.find(v.bits());
    if (it == rows.end()) continue;
    VariantRow r = it->second;
    r.mean_cost /= r.count;
    r.mean_gap = gap_count[v.bits()] ? r.mean_gap / gap_count[v.bits()] : kNaN;
    if (gate_acc.count(v.bits())) r.gate_mean = gate_acc[v.bits()].mean();
    rep.rows.push_back(std::move(r));
  }
  rep.instances = std::move(per);
  return rep;
}

void check_options(const EvalOptions& opt) {
  if (opt.aug != 1 && opt.aug != 8) throw std::invalid_argument("aug must be 1 or 8");
  if (opt.starts < 1) throw std::invalid_argument("starts must be >= 1");
}

}  // namespace

double reference_cost(const ProblemInstance& inst, Reference ref, std::string* tag) {
  if (ref == Reference::automatic) {
    ref = inst.num_customers() <= kAutoExhaustiveMax ? Reference::exhaustive : Reference::nearest_feasible;
  }
  switch (ref) {
    case Reference::exhaustive:
      if (tag) *tag = "exhaustive";
      return exhaustive_solve(inst).cost;
    case Reference::nearest_feasible:
      if (tag) *tag = "nearest_feasible";
      return nearest_feasible(inst).cost;
    default:
      if (tag) *tag = "none";
      return kNaN;
  }
}

EvalReport evaluate(const policy::Policy& policy, const std::vector<ProblemInstance>& dataset, const EvalOptions& opt) {
  check_options(opt);
  const int count = static_cast<int>(dataset.size());
  std::vector<InstanceEval> per(count);
  std::vector<double> times(count, 0.0);
  std::vector<std::optional<policy::GateStats>> gates(count);
  const bool want_gates = opt.gate_stats && policy.stage() == policy::Stage::unified;
  training::parallel_for(count, opt.jobs, [&](int i) {
    const ProblemInstance& inst = dataset[i];
    InstanceEval& e = per[i];
    e.variant = inst.variant;
    const auto t0 = Clock::now();
    const int starts = std::max(1, std::min(opt.starts, inst.num_customers()));
    policy::GateStats gs;
    bool have = false;
    e.valid = true;
    for (int k = 0; k < opt.aug; ++k) {
      const ProblemInstance view = k == 0 ? inst : dihedral_augment(inst, k);
      const auto r = training::rollout(policy, view, starts, training::DecodeMode::greedy, 0,
                                       want_gates ? &gs : nullptr);
      for (const auto& t : r.trajectories) {
        // Dihedral maps move coordinates only, so the tour applies unchanged to the original.
        Tour mapped{t.tour.nodes, tour_cost(inst, t.tour.nodes)};
        if (!validate_tour(inst, mapped).ok()) {
          e.valid = false;
          continue;
        }
        if (!have || mapped.cost < e.cost) {
          e.tour = mapped;
          e.cost = mapped.cost;
          e.aug = k;
          have = true;
        }
      }
    }
    if (!have) {
      e.valid = false;
      e.cost = kNaN;
    }
    times[i] = seconds_since(t0);
    e.ref_cost = reference_cost(inst, opt.reference, &e.reference);
    if (want_gates) gates[i] = gs;
  });
  return assemble(std::move(per), times, gates, opt);
}

EvalReport evaluate_solver(Solver solver, const std::vector<ProblemInstance>& dataset, const EvalOptions& opt) {
  const int count = static_cast<int>(dataset.size());
  std::vector<InstanceEval> per(count);
  std::vector<double> times(count, 0.0);
  std::vector<std::optional<policy::GateStats>> gates(count);
  training::parallel_for(count, opt.jobs, [&](int i) {
    const ProblemInstance& inst = dataset[i];
    InstanceEval& e = per[i];
    e.variant = inst.variant;
    const auto t0 = Clock::now();
    e.tour = solver == Solver::exhaustive ? exhaustive_solve(inst) : nearest_feasible(inst);
    e.cost = e.tour.cost;
    e.valid = validate_tour(inst, e.tour).ok();
    times[i] = seconds_since(t0);
    e.ref_cost = reference_cost(inst, opt.reference, &e.reference);
  });
  return assemble(std::move(per), times, gates, opt);
}

std::string format_gap(double gap) {
  if (std::isnan(gap)) return "n/a";
  char buf[64];
  std::snprintf(buf, sizeof buf, "%#.4g%%", gap * 100.0);
  return buf;
}

namespace {

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

}  // namespace

std::string emit_report(const EvalReport& report, ReportFormat format) {
  const std::vector<std::string> head = {"variant", "cost", "gap", "time", "count", "reference"};
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : report.rows) {
    cells.push_back({r.variant, fmt("%.6f", r.mean_cost), format_gap(r.mean_gap), fmt("%.3f", r.wall_time),
                     std::to_string(r.count), r.reference});
  }
  std::ostringstream os;
  if (format == ReportFormat::csv) {
    for (std::size_t c = 0; c < head.size(); ++c) os << (c ? "," : "") << head[c];
    os << '\n';
    for (const auto& row : cells) {
      for (std::size_t c = 0; c < row.size(); ++c) os << (c ? "," : "") << row[c];
      os << '\n';
    }
    return os.str();
  }
  std::vector<std::size_t> width(head.size());
  for (std::size_t c = 0; c < head.size(); ++c) {
    width[c] = head[c].size();
    for (const auto& row : cells) width[c] = std::max(width[c], row[c].size());
  }
  auto line = [&](const std::vector<std::string>& row) {
    for (std::size_t c = 0; c < row.size(); ++c) {
      if (c) os << "  ";
      const std::size_t pad = width[c] - row[c].size();
      // Text columns left-aligned, numbers right-aligned.
      if (c == 0 || c == 5) {
        os << row[c] << std::string(c + 1 == row.size() ? 0 : pad, ' ');
      } else {
        os << std::string(pad, ' ') << row[c];
      }
    }
    os << '\n';
  };
  line(head);
  for (const auto& row : cells) line(row);
  return os.str();
}

std::string report_json(const EvalReport& report) {
  nlohmann::ordered_json j;
  j["invalid_tours"] = report.invalid_tours;
  j["rows"] = nlohmann::ordered_json::array();
  for (const auto& r : report.rows) {
    nlohmann::ordered_json row;
    row["variant"] = r.variant;
    row["count"] = r.count;
    row["mean_cost"] = r.mean_cost;
    row["mean_gap"] = std::isnan(r.mean_gap) ? nlohmann::ordered_json(nullptr) : nlohmann::ordered_json(r.mean_gap);
    row["wall_time"] = r.wall_time;
    row["reference"] = r.reference;
    if (r.gate_mean) row["gate_mean"] = *r.gate_mean;
    j["rows"].push_back(row);
  }
  return j.dump(2) + "\n";
}

}  // namespace mtvrp::eval
