// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <ostream>

namespace deepkd {

// Full command-line entry point. Returns the process exit code:
// 0 success, 2 configuration/validation/parse failure, 1 runtime failure
// (including a failed gradcheck).
int run_cli(int argc, const char* const* argv, std::ostream& out,
            std::ostream& err);

}  // namespace deepkd
