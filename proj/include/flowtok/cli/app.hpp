// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace flowtok::cli {

// Runs the command line; returns the process exit code (0 success, 1 user
// error, 2 numerical or internal error).
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace flowtok::cli
