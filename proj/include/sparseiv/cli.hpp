#pragma once

#include <iosfwd>

namespace sparseiv::cli {

enum ExitCode : int { kOk = 0, kUsage = 2, kDataContract = 3, kNumeric = 4 };

/// Entry point shared by the executable and the tests. Subcommands:
/// simulate, fit, penalty, diagnose. Returns the process exit code.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace sparseiv::cli
