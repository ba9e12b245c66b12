#pragma once

#include <ostream>

namespace mtvrp::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;  // validation/check failure, file or runtime error
inline constexpr int kExitUsage = 2;

// Entry point of the mtvrp command-line tool; all output goes to `out` / `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace mtvrp::cli
