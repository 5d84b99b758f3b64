#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dmls2r {

// Entry point behind the dmls2r executable. args excludes the program name.
// Returns the process exit code: 0 success, 1 runtime failure, 2 usage or
// configuration error.
int run_cli(std::vector<std::string> args, std::ostream& out,
            std::ostream& err);
int run_cli(std::vector<std::string> args);

}  // namespace dmls2r
