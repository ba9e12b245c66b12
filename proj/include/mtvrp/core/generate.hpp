#pragma once

#include <cstdint>
#include <stdexcept>

#include "mtvrp/core/instance.hpp"

namespace mtvrp {

struct GenConfig {
  // Service duration ~ U(tw_i1, tw_i2); window length ~ U(tw_i2, tw_i3).
  double tw_i1 = 0.15;
  double tw_i2 = 0.18;
  double tw_i3 = 0.20;
  // System end time w0_end.
  double system_end = 4.6;
  // Upper end of the duration-limit sampling interval.
  double l_max = 2.8;
  // P(customer is a backhaul) in B variants.
  double backhaul_prob = 0.2;
};

class GenerationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Vehicle capacity as a function of the customer count.
int capacity_for(int n);

// Start-time upper bound w_UB for a customer at the given depot distance.
double tw_start_upper_bound(double system_end, double service, double length, double depot_dist);

// Samples one instance. Pure function of (n, variant, seed, cfg). All attributes are drawn
// in a fixed order regardless of the variant, then inactive ones are reset, so two variants
// generated from the same seed share coordinates and demands.
// Throws GenerationError when a sampling interval is empty.
ProblemInstance generate_instance(int n, Variant variant, std::uint64_t seed, const GenConfig& cfg = {});

// Per-instance seed for the index-th member of a dataset or training stream.
std::uint64_t instance_seed(std::uint64_t global_seed, std::uint64_t index);

// generate_instance, retrying with a derived seed on GenerationError (at most 64 attempts).
ProblemInstance sample_instance(int n, Variant variant, std::uint64_t seed, const GenConfig& cfg = {});

}  // namespace mtvrp
