#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace ces::tools {

// Runs one cesctl invocation; `args` excludes the program name. Failures
// print an error document to `err` and return nonzero.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace ces::tools
