#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace kgqa {

// Data/usage errors carry a human-readable message and map to exit code 2
// at the CLI boundary.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {
inline void append_all(std::ostringstream&) {}
template <typename A, typename... Rest>
void append_all(std::ostringstream& os, const A& a, const Rest&... rest) {
    os << a;
    append_all(os, rest...);
}
}  // namespace detail

template <typename... Args>
std::string cat(const Args&... args) {
    std::ostringstream os;
    detail::append_all(os, args...);
    return os.str();
}

template <typename... Args>
[[noreturn]] void fail(const Args&... args) {
    throw Error(cat(args...));
}

template <typename... Args>
void require(bool cond, const Args&... args) {
    if (!cond) fail(args...);
}

}  // namespace kgqa
