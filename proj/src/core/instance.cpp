#include "mtvrp/core/instance.hpp"

#include <stdexcept>
#include <string>

namespace mtvrp {

namespace {
void require(bool ok, const std::string& what) {
  if (!ok) throw std::invalid_argument("invalid instance: " + what);
}
}  // namespace

void check_instance(const ProblemInstance& inst) {
  const std::size_t n1 = inst.coords.size();
  require(n1 >= 1, "no depot");
  require(inst.linehaul.size() == n1 && inst.backhaul.size() == n1, "demand array length");
  require(inst.tw_beg.size() == n1 && inst.tw_end.size() == n1 && inst.tw_dur.size() == n1,
          "time window array length");
  require(inst.capacity > 0, "capacity must be positive");
  require(inst.linehaul[0] == 0 && inst.backhaul[0] == 0, "depot demand must be zero");
  require(inst.tw_beg[0] == 0.0 && inst.tw_dur[0] == 0.0, "depot window must start at 0 with no service");
  require(inst.dur_limit > 0.0, "duration limit must be positive");
  for (std::size_t j = 0; j < n1; ++j) {
    const auto& p = inst.coords[j];
    require(p.x >= 0.0 && p.x <= 1.0 && p.y >= 0.0 && p.y <= 1.0, "coordinate outside unit square");
    require(inst.linehaul[j] >= 0, "negative linehaul demand");
    require(inst.backhaul[j] <= 0, "positive backhaul demand");
    require(inst.linehaul[j] == 0 || inst.backhaul[j] == 0, "customer is both linehaul and backhaul");
    require(inst.tw_beg[j] <= inst.tw_end[j], "time window begins after it ends");
    require(inst.tw_dur[j] >= 0.0, "negative service duration");
  }
  if (!inst.variant.backhaul) {
    for (int b : inst.backhaul) require(b == 0, "backhaul demand in a variant without backhauls");
  }
  if (!inst.variant.time_window) {
    for (std::size_t j = 0; j < n1; ++j) {
      require(inst.tw_beg[j] == 0.0 && inst.tw_end[j] == kInf && inst.tw_dur[j] == 0.0,
              "time window values in a variant without time windows");
    }
  }
  require(inst.open == inst.variant.open, "open flag disagrees with the variant");
  if (!inst.variant.duration_limit) require(inst.dur_limit == kInf, "finite duration limit without L");
}

}  // namespace mtvrp
