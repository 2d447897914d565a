#ifndef APN_TOOLS_COMMANDS_HPP_
#define APN_TOOLS_COMMANDS_HPP_

#include <iostream>
#include <string>
#include <vector>

namespace apn::cli {

enum ExitCode : int { kOk = 0, kContractFailure = 1, kIoFailure = 2 };

/// Runs one `apn` command line. `args` excludes the program name, e.g.
/// {"train", "--data", "d/", "-o", "run/"}. Library errors are reported on
/// `err` and mapped to exit codes: contract or validation problems give 1,
/// file-system problems give 2.
int run(const std::vector<std::string>& args, std::ostream& out = std::cout,
        std::ostream& err = std::cerr);

}  // namespace apn::cli

#endif  // APN_TOOLS_COMMANDS_HPP_
