#pragma once

#include <ostream>

namespace subtomo::cli {

// Entry point of the `subtomo` tool. Returns the process exit code:
// 0 success, 1 bad command line or config, 2 runtime failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace subtomo::cli
