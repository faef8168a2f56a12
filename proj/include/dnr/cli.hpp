#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dnr {

/// Process exit codes of the command-line tool.
enum ExitCode : int { kExitOk = 0, kExitUsage = 1, kExitIo = 2, kExitNumeric = 3 };

/// Runs the `dnr` tool with argv-style arguments (args[0] is the program
/// name). Normal output goes to `out`, diagnostics to `err`.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace dnr
