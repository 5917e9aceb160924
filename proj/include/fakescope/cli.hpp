#pragma once

#include <ostream>

#include "fakescope/config.hpp"

namespace fakescope {

/// Exit codes of the fakescope command.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;
inline constexpr int kExitUndecided = 2;  // detect: Rejected or Unparsable

/// Runs the command line in-process and returns the exit code. Normal output
/// goes to out, diagnostics to err.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err,
            const EnvLookup& env = process_env());

}  // namespace fakescope
