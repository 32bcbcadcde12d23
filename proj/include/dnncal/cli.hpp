#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace dnncal {

inline constexpr const char* kVersion = "0.1.0";

/// Entry point behind the command-line tool. argv[0] is the program name.
/// Returns 0 on success, 1 for usage errors, 2 for data errors and 3 for
/// numeric failures.
int run_command(const std::vector<std::string>& argv, std::ostream& out, std::ostream& err);

}  // namespace dnncal
