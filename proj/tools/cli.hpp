#pragma once

#include <iosfwd>

namespace rgcd::cli {

// Runs one command line. Failures print a single `error: <category>: <message>`
// line to `err` and return nonzero.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace rgcd::cli
