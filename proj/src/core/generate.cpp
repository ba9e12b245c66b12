#include "mtvrp/core/generate.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "mtvrp/core/rng.hpp"

namespace mtvrp {

int capacity_for(int n) {
  if (n > 1000) return 30 + static_cast<int>(std::floor(1000.0 / 5.0 + (n - 1000) / 33.3));
  if (n > 20) return 30 + n / 5;
  return 30;
}

double tw_start_upper_bound(double system_end, double service, double length, double depot_dist) {
  return (system_end - service - length) / depot_dist - 1.0;
}

ProblemInstance generate_instance(int n, Variant variant, std::uint64_t seed, const GenConfig& cfg) {
  if (n < 1) throw std::invalid_argument("generate_instance: n must be >= 1");
  Rng rng(seed);
  const int n1 = n + 1;

  ProblemInstance inst;
  inst.variant = variant;
  inst.seed = seed;
  inst.capacity = capacity_for(n);
  inst.open = variant.open;

  inst.coords.resize(n1);
  for (auto& p : inst.coords) {
    p.x = rng.uniform01();
    p.y = rng.uniform01();
  }

  inst.linehaul.assign(n1, 0);
  inst.backhaul.assign(n1, 0);
  std::vector<int> bh_draw(n1, 0);
  std::vector<bool> is_bh(n1, false);
  for (int j = 1; j < n1; ++j) inst.linehaul[j] = static_cast<int>(rng.uniform_int(1, 9));
  for (int j = 1; j < n1; ++j) bh_draw[j] = -static_cast<int>(rng.uniform_int(1, 9));
  for (int j = 1; j < n1; ++j) is_bh[j] = rng.bernoulli(cfg.backhaul_prob);
  if (variant.backhaul) {
    for (int j = 1; j < n1; ++j) {
      if (is_bh[j]) {
        inst.linehaul[j] = 0;
        inst.backhaul[j] = bh_draw[j];
      }
    }
  }

  // Time windows.
  inst.tw_beg.assign(n1, 0.0);
  inst.tw_end.assign(n1, kInf);
  inst.tw_dur.assign(n1, 0.0);
  std::vector<double> service(n1), length(n1), u(n1);
  for (int j = 1; j < n1; ++j) service[j] = rng.uniform(cfg.tw_i1, cfg.tw_i2);
  for (int j = 1; j < n1; ++j) length[j] = rng.uniform(cfg.tw_i2, cfg.tw_i3);
  for (int j = 1; j < n1; ++j) u[j] = rng.uniform01();
  if (variant.time_window) {
    inst.tw_end[0] = cfg.system_end;
    for (int j = 1; j < n1; ++j) {
      const double d = inst.dist(0, j);
      double beg;
      if (d > 0.0) {
        const double ub = tw_start_upper_bound(cfg.system_end, service[j], length[j], d);
        beg = (1.0 + (ub - 1.0) * u[j]) * d;
      } else {
        beg = u[j] * (cfg.system_end - service[j] - length[j]);
      }
      inst.tw_beg[j] = beg;
      inst.tw_end[j] = beg + length[j];
      inst.tw_dur[j] = service[j];
      // Reachable from the depot at time 0 and able to return by the system end.
      const double arrive = d;
      const bool reachable = arrive <= inst.tw_end[j] + kFeasEps &&
                             std::max(arrive, beg) + service[j] + d <= cfg.system_end + kFeasEps;
      if (!reachable) {
        throw GenerationError("customer " + std::to_string(j) +
                              " cannot be served within the system end time");
      }
    }
  }

  // Duration limit.
  double max_d = 0.0;
  for (int j = 1; j < n1; ++j) max_d = std::max(max_d, inst.dist(0, j));
  const double l_u = rng.uniform01();
  if (variant.duration_limit) {
    const double lo = 2.0 * max_d;
    if (!(cfg.l_max > lo)) {
      throw GenerationError("duration limit interval is empty: 2*max depot distance " + std::to_string(lo) +
                            " >= l_max " + std::to_string(cfg.l_max));
    }
    inst.dur_limit = lo + (cfg.l_max - lo) * l_u;
  }
  return inst;
}

std::uint64_t instance_seed(std::uint64_t global_seed, std::uint64_t index) {
  return Rng::splitmix64(Rng::splitmix64(global_seed) ^ Rng::splitmix64(index + 0x632be59bd9b4e019ULL));
}

ProblemInstance sample_instance(int n, Variant variant, std::uint64_t seed, const GenConfig& cfg) {
  std::uint64_t s = seed;
  for (int attempt = 0; attempt < 64; ++attempt) {
    try {
      return generate_instance(n, variant, s, cfg);
    } catch (const GenerationError&) {
      s = instance_seed(s, static_cast<std::uint64_t>(attempt) + 1);
    }
  }
  throw GenerationError("sample_instance: no valid instance after 64 attempts");
}

}  // namespace mtvrp
