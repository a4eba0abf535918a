#pragma once

#include <iosfwd>

namespace red::cli {

/// Runs one command line. Exit codes: 0 success, 1 invalid input or
/// arguments, 2 I/O failure.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace red::cli
