#pragma once

#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

// Small helpers shared by the case, scenario and CSV readers/writers.
namespace dse::text {

class ParseError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Whitespace-split `line`, dropping everything from the first '#'.
std::vector<std::string> tokenize(std::string_view line);

/// Split on a single delimiter, keeping empty fields.
std::vector<std::string> split(std::string_view s, char delim);

double to_double(std::string_view s);
int to_int(std::string_view s);
long long to_int64(std::string_view s);

/// Shortest decimal form that parses back to the identical double.
std::string format_double(double value);

}  // namespace dse::text
