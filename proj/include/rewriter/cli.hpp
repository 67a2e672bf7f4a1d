#pragma once

#include <string>
#include <vector>

namespace rewriter::cli {

// Entry point behind the rewriter binary. args excludes the program name.
// Exit status: 0 success, 1 validation/usage/config error, 2 runtime error.
int run(std::vector<std::string> args);

}  // namespace rewriter::cli
