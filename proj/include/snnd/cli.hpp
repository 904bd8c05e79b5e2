#pragma once

#include <ostream>

// Command line entry point, separated from main() so tests can invoke
// subcommands in-process and inspect exit codes and streams.
//
// Exit codes: 0 success, 1 usage error, 2 configuration error, 3 data or
// file format error, 4 numeric failure or internal error.

namespace snnd {

int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace snnd
