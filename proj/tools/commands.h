#pragma once

#include <string>
#include <vector>

namespace veil::cli {

/// Parses `args` (without the program name) and runs one command.
/// Returns the process exit code: 0 ok, 2 configuration/usage error,
/// 3 runtime failure.
int run(const std::vector<std::string>& args);

}  // namespace veil::cli
