#pragma once

#include <string>
#include <vector>

namespace ctha::cli {

/// Entry point behind the ctha binary; split out so tests can drive the CLI
/// in-process. Exit codes: 0 success, 1 usage error, 2 invalid input file,
/// 3 internal contract violation.
int run(const std::vector<std::string>& args);

}  // namespace ctha::cli
