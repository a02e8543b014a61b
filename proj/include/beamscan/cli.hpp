#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace beamscan {

inline constexpr const char* kVersion = "0.1.0";

enum ExitCode : int {
  kExitOk = 0,
  kExitUsage = 2,
  kExitData = 3,
  kExitGuard = 4,
};

/// Runs one subcommand. `args` excludes the program name. Main outputs go
/// to files under --out when given, otherwise to `out`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace beamscan
