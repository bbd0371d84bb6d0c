#pragma once

#include <ostream>

namespace dnsgd {

/// Entry point of the `dnsgd` tool. Returns 0 on success, 1 when a check
/// fails and 2 on usage or configuration errors.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace dnsgd
