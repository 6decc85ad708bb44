#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace noiselab {

inline constexpr const char* kVersion = "0.1.0";

/// Runtime error type used across the library.
class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& what) : std::runtime_error(what) {}
};

namespace detail {
inline void cat_one(std::ostringstream&) {}
template <typename T, typename... Rest>
void cat_one(std::ostringstream& os, const T& v, const Rest&... rest) {
  os << v;
  cat_one(os, rest...);
}
}  // namespace detail

/// Concatenate arbitrary streamable values into a std::string.
template <typename... Args>
std::string cat(const Args&... args) {
  std::ostringstream os;
  os.precision(17);
  detail::cat_one(os, args...);
  return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
  throw Error(cat(args...));
}

template <typename... Args>
void check(bool cond, const Args&... args) {
  if (!cond) fail(args...);
}

}  // namespace noiselab
