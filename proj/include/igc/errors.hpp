#pragma once

#include <stdexcept>
#include <string>

namespace igc {

// Error taxonomy used across the library. The CLI maps these onto exit codes.
struct ShapeError : std::runtime_error {
    explicit ShapeError(const std::string& msg) : std::runtime_error("shape error: " + msg) {}
};

struct GeometryError : std::runtime_error {
    explicit GeometryError(const std::string& msg) : std::runtime_error("geometry error: " + msg) {}
};

struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& msg) : std::runtime_error("config error: " + msg) {}
};

struct InputError : std::runtime_error {
    explicit InputError(const std::string& msg) : std::runtime_error("input error: " + msg) {}
};

struct FormatError : std::runtime_error {
    explicit FormatError(const std::string& msg) : std::runtime_error("format error: " + msg) {}
};

struct IncompatibilityError : std::runtime_error {
    explicit IncompatibilityError(const std::string& msg)
        : std::runtime_error("incompatibility error: " + msg) {}
};

} // namespace igc
