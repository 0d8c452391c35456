#pragma once

#include <iostream>

namespace mgract::cli {

/// Entry point for the mgr-act binary. Returns 0 on success, 2 on usage
/// errors and 1 on data errors.
int run(int argc, const char* const* argv, std::ostream& out = std::cout, std::ostream& err = std::cerr);

}  // namespace mgract::cli
