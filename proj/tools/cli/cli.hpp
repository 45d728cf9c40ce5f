#pragma once

#include <iosfwd>

namespace cd3t::cli {

/// Entry point of the `cd3t` tool; returns the process exit code.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace cd3t::cli
