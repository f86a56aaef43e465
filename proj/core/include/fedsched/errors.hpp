#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace fedsched {

// Error categories map one-to-one onto CLI exit codes, so every throw site
// picks the class by what the caller can do about it, not by where it occurred.

struct ValidationError : std::runtime_error {
    explicit ValidationError(const std::string& what) : std::runtime_error(what) {}
};

struct IoError : std::runtime_error {
    explicit IoError(const std::string& what) : std::runtime_error(what) {}
};

// Input file parsed but its framing is wrong (bad magic, bad header).
struct FormatError : IoError {
    explicit FormatError(const std::string& what) : IoError(what) {}
};

// Two inputs are individually valid but disagree with each other.
struct ConsistencyError : IoError {
    explicit ConsistencyError(const std::string& what) : IoError(what) {}
};

struct DivergenceError : std::runtime_error {
    DivergenceError(const std::string& what, std::int64_t round)
        : std::runtime_error(what), round(round) {}
    std::int64_t round;
};

}  // namespace fedsched
