#include "mtvrp/core/variant.hpp"

#include <stdexcept>

namespace mtvrp {

std::string_view basis_tag(Basis b) {
  switch (b) {
    case Basis::capacity: return "C";
    case Basis::open: return "O";
    case Basis::backhaul: return "B";
    case Basis::duration_limit: return "L";
    case Basis::time_window: return "TW";
  }
  return "?";
}

Basis parse_basis_tag(std::string_view tag) {
  for (Basis b : kAllBases) {
    if (basis_tag(b) == tag) return b;
  }
  throw std::invalid_argument("unknown basis tag: " + std::string(tag));
}

bool Variant::has(Basis b) const {
  switch (b) {
    case Basis::capacity: return true;
    case Basis::open: return open;
    case Basis::backhaul: return backhaul;
    case Basis::duration_limit: return duration_limit;
    case Basis::time_window: return time_window;
  }
  return false;
}

int Variant::bits() const {
  return (open ? 1 : 0) | (backhaul ? 2 : 0) | (duration_limit ? 4 : 0) | (time_window ? 8 : 0);
}

Variant Variant::from_bits(int bits) {
  if (bits < 0 || bits > 15) throw std::invalid_argument("variant bits out of range");
  return Variant{(bits & 1) != 0, (bits & 2) != 0, (bits & 4) != 0, (bits & 8) != 0};
}

std::string Variant::name() const {
  std::string s;
  if (open) s += "O";
  s += "VRP";
  if (backhaul) s += "B";
  if (duration_limit) s += "L";
  if (time_window) s += "TW";
  if (s == "VRP") return "CVRP";
  return s;
}

Variant Variant::parse(std::string_view name) {
  for (const Variant& v : all_variants()) {
    if (v.name() == name) return v;
  }
  throw std::invalid_argument("unknown VRP variant: " + std::string(name));
}

std::vector<Basis> Variant::basis_set() const {
  std::vector<Basis> out;
  for (Basis b : kAllBases) {
    if (has(b)) out.push_back(b);
  }
  return out;
}

int Variant::expert_count() const {
  return static_cast<int>(open) + static_cast<int>(backhaul) + static_cast<int>(duration_limit) +
         static_cast<int>(time_window);
}

const std::vector<Variant>& all_variants() {
  static const std::vector<Variant> kAll = [] {
    const char* names[] = {"CVRP",   "OVRP",   "VRPB",   "VRPL",     "VRPTW",   "OVRPTW",
                           "VRPBL",  "VRPBLTW", "VRPBTW", "VRPLTW",  "OVRPB",   "OVRPBL",
                           "OVRPBLTW", "OVRPBTW", "OVRPL", "OVRPLTW"};
    std::vector<Variant> out;
    for (const char* n : names) {
      std::string_view name(n);
      // Decode without going through parse(), which depends on this table.
      Variant v;
      if (name != "CVRP") {
        v.open = name.front() == 'O';
        auto rest = name.substr(name.find("VRP") + 3);
        v.backhaul = rest.find('B') != std::string_view::npos;
        v.duration_limit = rest.find('L') != std::string_view::npos;
        v.time_window = rest.find("TW") != std::string_view::npos;
      }
      out.push_back(v);
    }
    return out;
  }();
  return kAll;
}

const std::vector<Variant>& basis_variants() {
  static const std::vector<Variant> kBasis = {Variant{}, Variant{true, false, false, false},
                                              Variant{false, true, false, false}, Variant{false, false, true, false},
                                              Variant{false, false, false, true}};
  return kBasis;
}

Variant basis_variant(Basis b) {
  Variant v;
  switch (b) {
    case Basis::capacity: break;
    case Basis::open: v.open = true; break;
    case Basis::backhaul: v.backhaul = true; break;
    case Basis::duration_limit: v.duration_limit = true; break;
    case Basis::time_window: v.time_window = true; break;
  }
  return v;
}

}  // namespace mtvrp
