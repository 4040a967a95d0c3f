#pragma once

#include <stdexcept>
#include <string>

namespace fedtdd {

// Thrown on contract violations: bad shapes, invalid configs, malformed files.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& what) : std::runtime_error(what) {}
};

inline void require(bool cond, const std::string& what) {
    if (!cond) throw Error(what);
}

}  // namespace fedtdd
