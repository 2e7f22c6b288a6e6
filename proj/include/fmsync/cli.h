#pragma once

#include <iostream>

namespace fmsync {

// Entry point of the fmsync command line tool. Returns the process exit code:
// 0 on success, 1 on usage errors, 2 on data or solver errors.
int cli_main(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace fmsync
