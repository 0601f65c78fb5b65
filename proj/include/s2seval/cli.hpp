#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace s2seval::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kRuntime = 2 };

// Runs the s2seval command line with `args` (program name excluded). Output
// that is not redirected with --output goes to `out`; diagnostics go to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace s2seval::cli
