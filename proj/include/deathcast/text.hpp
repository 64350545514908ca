#ifndef DEATHCAST_TEXT_HPP_
#define DEATHCAST_TEXT_HPP_

#include <charconv>
#include <cmath>
#include <string>

namespace deathcast {

// Shortest text that parses back to the same double; "nan" for NaN.
inline std::string FormatShortest(double v) {
  if (std::isnan(v)) return "nan";
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  return std::string(buf, end);
}

}  // namespace deathcast

#endif  // DEATHCAST_TEXT_HPP_
