#include "sacnn/format.hpp"

#include <cstdio>
#include <cstdlib>
#include <cstring>

namespace sacnn {

std::string format_double(double value) {
  char buf[64];
  for (int precision = 1; precision <= 17; ++precision) {
    std::snprintf(buf, sizeof(buf), "%.*g", precision, value);
    if (std::strtod(buf, nullptr) == value) break;
  }
  std::string s(buf);
  const std::size_t e = s.find('e');
  if (e != std::string::npos) {
    std::size_t digits = e + 1;
    if (digits < s.size() && (s[digits] == '+' || s[digits] == '-')) ++digits;
    std::size_t first_digit = digits;
    while (first_digit + 1 < s.size() && s[first_digit] == '0') ++first_digit;
    s.erase(digits, first_digit - digits);
  }
  return s;
}

}  // namespace sacnn
