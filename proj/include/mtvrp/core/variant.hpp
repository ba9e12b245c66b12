#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>
#include <vector>

namespace mtvrp {

// The five basis constraints. Capacity is implied by every variant.
enum class Basis : std::uint8_t { capacity = 0, open = 1, backhaul = 2, duration_limit = 3, time_window = 4 };

inline constexpr std::array<Basis, 5> kAllBases = {Basis::capacity, Basis::open, Basis::backhaul,
                                                   Basis::duration_limit, Basis::time_window};

// Non-capacity bases in expert order (O, B, L, TW).
inline constexpr std::array<Basis, 4> kExpertBases = {Basis::open, Basis::backhaul, Basis::duration_limit,
                                                      Basis::time_window};

std::string_view basis_tag(Basis b);  // "C", "O", "B", "L", "TW"
Basis parse_basis_tag(std::string_view tag);

struct Variant {
  bool open = false;
  bool backhaul = false;
  bool duration_limit = false;
  bool time_window = false;

  bool has(Basis b) const;
  // Bit index O=1, B=2, L=4, TW=8.
  int bits() const;
  static Variant from_bits(int bits);

  std::string name() const;
  static Variant parse(std::string_view name);

  // Active bases in canonical order C, O, B, L, TW.
  std::vector<Basis> basis_set() const;
  // Number of active non-capacity bases.
  int expert_count() const;

  friend bool operator==(const Variant&, const Variant&) = default;
};

// All 16 variants, in the canonical listing order.
const std::vector<Variant>& all_variants();

// The five single-constraint variants: CVRP, OVRP, VRPB, VRPL, VRPTW.
const std::vector<Variant>& basis_variants();

// The basis variant associated with one expert basis (e.g. TW -> VRPTW).
Variant basis_variant(Basis b);

}  // namespace mtvrp
