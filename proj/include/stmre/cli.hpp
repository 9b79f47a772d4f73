#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace stmre {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 2;  // bad flags, config or data
inline constexpr int kExitDiverged = 3;

/// Parses `args` (without the program name), runs one command and maps
/// failures to exit codes. Progress goes to `out`, errors to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace stmre
