#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace e2s::cli {

// Runs one command line (args[0] is the program name). Returns the exit
// status: 0 success, 2 config error, 3 data error, 4 numerical abort,
// 1 anything else.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace e2s::cli
