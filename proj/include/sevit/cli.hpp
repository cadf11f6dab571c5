#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace sevit {

/// Process exit codes of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitFailure = 1,      // unexpected internal error
  kExitConfig = 2,       // bad arguments, config or schema
  kExitData = 3,         // unreadable or malformed data files
  kExitShape = 4,        // data / model / weights dimensions disagree
  kExitNumeric = 5,      // non-finite values
};

/// Runs the command line `args` (args[0] is the program name). Progress and
/// results go to `out`, diagnostics to `err`. Returns an ExitCode.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace sevit
