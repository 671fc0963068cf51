#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace hjblab::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kInput = 2, kNumerical = 3, kAssert = 4 };

/// Runs one hjblab command line. argv[0] is the program name.
int run_cli(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace hjblab::cli
