#pragma once

#include <filesystem>
#include <stdexcept>
#include <string>
#include <vector>

#include "mtvrp/core/instance.hpp"
#include "mtvrp/core/tour.hpp"

namespace mtvrp {

inline constexpr int kInstanceFormatVersion = 1;
inline constexpr int kTourFormatVersion = 1;

class FormatError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Instance document: a JSON object with exactly the fields
//   version, variant, n, seed, coords, linehaul, backhaul, capacity, open,
//   dur_limit, tw_beg, tw_end, tw_dur
// Reals are written with 17 significant digits; infinity is the string "inf".
std::string serialize_instance(const ProblemInstance& inst);
ProblemInstance parse_instance(const std::string& text);

// FNV-1a 64 over the serialized instance, as 16 lowercase hex digits.
std::string instance_hash(const ProblemInstance& inst);

// Tour document: version, instance_hash, nodes, cost.
std::string serialize_tour(const ProblemInstance& inst, const Tour& tour);
struct TourFile {
  std::string instance_hash;
  Tour tour;
};
TourFile parse_tour(const std::string& text);

std::string read_text_file(const std::filesystem::path& path);
// Writes through a temporary file so readers never observe a partial file.
void write_text_file(const std::filesystem::path& path, const std::string& text);

// Dataset manifest: one "<variant> <relative path>" line per instance.
struct DatasetEntry {
  Variant variant;
  std::string path;
};
std::vector<DatasetEntry> parse_manifest(const std::string& text);
std::string serialize_manifest(const std::vector<DatasetEntry>& entries);

struct Dataset {
  std::vector<ProblemInstance> instances;
  std::vector<std::string> names;
};
// Loads every instance listed in <dir>/manifest.txt. Throws FormatError when a file's
// variant disagrees with its manifest tag.
Dataset load_dataset(const std::filesystem::path& dir);

}  // namespace mtvrp
