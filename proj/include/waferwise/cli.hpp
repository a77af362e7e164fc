#pragma once

#include <ostream>
#include <string>
#include <string_view>
#include <vector>

namespace waferwise::cli {

inline constexpr std::string_view kVersion = "0.1.0";

/// Runs one command line (args excludes the program name). Summary lines go to `out`;
/// failures print "error: <code>: <message>" to `err` and return nonzero
/// (2 for usage errors, 1 otherwise).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace waferwise::cli
