#pragma once

#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace sane {

class Error : public std::runtime_error {
 public:
  explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

template <class... Parts>
[[noreturn]] inline void fail(Parts&&... parts) {
  std::ostringstream os;
  (os << ... << parts);
  throw Error(os.str());
}

}  // namespace detail

// Throws sane::Error with a formatted message when cond is false.
#define SANE_REQUIRE(cond, ...)                        \
  do {                                                 \
    if (!(cond)) ::sane::detail::fail(__VA_ARGS__);    \
  } while (0)

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& s) {
  std::size_t n = 1;
  for (auto e : s) n *= e;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) os << 'x';
    os << s[i];
  }
  os << ']';
  return os.str();
}

}  // namespace sane
