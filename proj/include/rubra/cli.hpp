#pragma once

#include <iosfwd>

namespace rubra::cli {

/// Entry point for the `rubra` command line tool. Returns the process exit
/// code: 0 success, 1 run finished with per-trial failures, 2 usage or
/// validation error.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rubra::cli
