#pragma once

#include <string>
#include <vector>

namespace resq {

// Runs one CLI invocation (arguments without the program name) and returns
// the process exit status. Factored out of main() so tests can drive it
// in-process.
int cli_run(const std::vector<std::string>& args);

}  // namespace resq
