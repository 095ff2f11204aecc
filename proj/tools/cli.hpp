#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace etm::cli {

enum ExitCode : int { kSuccess = 0, kUsage = 1, kDataError = 2, kNumericFailure = 3 };

/// Entry point shared by the `etm` binary and the tests. `args` excludes the
/// program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace etm::cli
