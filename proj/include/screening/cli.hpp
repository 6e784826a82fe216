#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace screening::cli {

enum ExitCode : int {
    kOk = 0,
    kUsage = 1,
    kSchema = 2,
    kPremise = 3,
    kNetwork = 4,
    kPartialFailure = 5,
};

/// Runs the `screening` command line. `args` excludes the program name.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace screening::cli
