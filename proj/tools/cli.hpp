#pragma once

#include <atomic>
#include <iosfwd>
#include <string>
#include <vector>

namespace spindaq {

/// Runs one command line (args excludes the program name) and returns the
/// process exit status. Failures print a single "error: ..." line to err.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

/// Set by the signal handler; `serve` exits when it turns true.
extern std::atomic<bool> g_shutdown_requested;

}  // namespace spindaq
