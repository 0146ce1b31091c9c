#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace pillarvote::cli {

inline constexpr const char* kVersion = "1.0.0";

enum ExitCode : int { kOk = 0, kUsage = 2, kDataError = 3, kContract = 4 };

// Runs one command line (args excludes the program name). Normal output
// goes to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace pillarvote::cli
