#pragma once

#include <stdexcept>

#include "mtvrp/core/instance.hpp"
#include "mtvrp/core/tour.hpp"

namespace mtvrp::eval {

inline constexpr int kExhaustiveMaxCustomers = 9;

// Optimal tour by depth-first enumeration of feasible action sequences with branch and bound.
// Throws std::invalid_argument for more than kExhaustiveMaxCustomers customers.
Tour exhaustive_solve(const ProblemInstance& inst);

// From each state, the closest feasible customer (lowest index on ties); back to the depot only
// when no customer fits.
Tour nearest_feasible(const ProblemInstance& inst);

}  // namespace mtvrp::eval
