#pragma once

#include <iosfwd>

namespace scrcl {

/// Entry point for the `scrcl` tool. Returns the process exit code:
/// 0 on success, 2 on usage errors, 1 on any other failure.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace scrcl
