#pragma once

// Command-line front end. `run` never throws: library errors become exit
// code 2 (configuration, parse, I/O) or 3 (numerical, with the module named).

#include <ostream>
#include <string>
#include <vector>

namespace spindyn::cli {

inline constexpr const char* kVersion = "0.1.0";
inline constexpr unsigned long long kDefaultSeed = 20240601ULL;

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

// "62.5mT", "2.87GHz", "10us", or a bare SI number. `dimension` is one of
// "frequency", "field", "time".
double parse_si(const std::string& text, const std::string& dimension);

}  // namespace spindyn::cli
