#pragma once

#include <iosfwd>

namespace iotflow::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitData = 2;
inline constexpr int kExitInternal = 3;

/// Parses and runs one command. Never throws; errors become exit codes with a
/// message on `err`.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace iotflow::cli
