#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace csb_ewma::cli {

// Process exit codes.
inline constexpr int exit_ok = 0;
inline constexpr int exit_validation_failed = 1;
inline constexpr int exit_usage = 2;
inline constexpr int exit_data = 3;

/// Runs the command line `args` (args[0] is the program name). "-" as a path
/// means `in` for input and `out` for output.
int run(const std::vector<std::string>& args, std::istream& in, std::ostream& out, std::ostream& err);

} // namespace csb_ewma::cli
