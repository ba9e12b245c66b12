#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mtvrp/core/variant.hpp"
#include "mtvrp/policy/model.hpp"

namespace mtvrp::training {

struct GradcheckCase {
  std::string name;        // e.g. "unified/sigmoid"
  double max_rel_error = 0.0;
  std::string worst_tensor;
  int tensors = 0;
  int entries = 0;
};

struct GradcheckOptions {
  int d_model = 16;
  int n = 6;
  double h = 1e-6;
  int entries_per_tensor = 6;  // sampled coordinates per tensor; <= 0 checks every coordinate
  // Denominator floor. Central differences at h = 1e-6 carry about 1e-8 of rounding noise per
  // coordinate, so gradients far below the floor are compared in absolute terms.
  double floor = 1e-3;
  std::uint64_t seed = 1;
};

// Central-difference check of the whole policy graph (encoder, decoder, adapters, gates) on the
// summed log-probability of fixed multi-start trajectories. Per tensor, the error is
//   ||g_analytic - g_numeric|| / max(||g_analytic||, ||g_numeric||, floor)
// over the sampled coordinates. Every parameter is perturbed, frozen or not.
GradcheckCase check_policy_gradients(const policy::Policy& policy, Variant variant, const GradcheckOptions& opt);

// Backbone, Gated-LoRA expert, standard LoRA expert and unified policies under all three gate
// activations, with non-zero adapters so every path carries gradient.
std::vector<GradcheckCase> policy_gradcheck_suite(const GradcheckOptions& opt = {});

}  // namespace mtvrp::training
