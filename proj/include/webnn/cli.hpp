#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace webnn {

enum ExitCode : int {
    kExitOk = 0,
    kExitFailure = 1,
    kExitConfig = 2,
    kExitMissingInput = 3,
    kExitBadCheckpoint = 4,
    kExitEquivalence = 5,
};

/// Runs the `webnn` command line. `args` excludes the program name.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

} // namespace webnn
