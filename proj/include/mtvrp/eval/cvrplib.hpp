#pragma once

#include <stdexcept>
#include <string>

#include "mtvrp/core/instance.hpp"

namespace mtvrp::eval {

class CvrplibError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A CVRPLIB instance mapped into the unit square. Original coordinates are
//   x = offset_x + scale * x', y = offset_y + scale * y'
// with one factor for both axes, so a tour cost in file units is scale * cost.
struct CvrplibInstance {
  std::string name;
  ProblemInstance instance;
  double scale = 1.0;
  double offset_x = 0.0;
  double offset_y = 0.0;

  double original_cost(double scaled_cost) const { return scale * scaled_cost; }
};

// Reads NAME / DIMENSION / CAPACITY / EDGE_WEIGHT_TYPE (EUC_2D only) headers and the
// NODE_COORD_SECTION, DEMAND_SECTION and DEPOT_SECTION blocks. The depot becomes node 0 and
// the remaining nodes keep their file order. Throws CvrplibError.
CvrplibInstance parse_cvrplib(const std::string& text);

}  // namespace mtvrp::eval
