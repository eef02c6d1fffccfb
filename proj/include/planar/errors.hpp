#pragma once

#include <stdexcept>
#include <string>

namespace planar {

// Error categories map one-to-one onto the tool's exit codes.
class ConfigError : public std::invalid_argument {
public:
    explicit ConfigError(const std::string& what) : std::invalid_argument(what) {}
};

class NumericError : public std::runtime_error {
public:
    explicit NumericError(const std::string& what) : std::runtime_error(what) {}
};

class IoError : public std::runtime_error {
public:
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

namespace exit_code {
inline constexpr int ok = 0;
inline constexpr int verify_failed = 1;
inline constexpr int config = 2;
inline constexpr int numeric = 3;
inline constexpr int io = 4;
}  // namespace exit_code

}  // namespace planar
