#pragma once

#include <ostream>

namespace phmm::cli {

// Exit codes of the phmm tool.
inline constexpr int kExitOk = 0;
inline constexpr int kExitError = 1;      // I/O, parse or validation failure
inline constexpr int kExitUsage = 2;      // bad command line
inline constexpr int kExitNotConverged = 3;  // fit: best restart did not converge

// Entry point of the phmm command line, usable in-process. Human-readable
// summaries go to `out`, diagnostics to `err`; result files are written
// under --output-dir.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace phmm::cli
