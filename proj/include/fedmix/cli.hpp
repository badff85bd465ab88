#pragma once

#include <iosfwd>

namespace fedmix::cli {

/// Exit codes shared by all subcommands.
enum ExitCode : int { kOk = 0, kValidation = 1, kIo = 2, kNumerical = 3 };

/// Entry point for `fedmix gen|fit|sweep ...`. out receives machine-readable
/// progress lines, err receives diagnostics.
int run(int argc, const char *const *argv, std::ostream &out, std::ostream &err);

}  // namespace fedmix::cli
