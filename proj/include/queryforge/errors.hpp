#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>

namespace queryforge {

// Base class for all typed errors raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class IoError : public Error {
public:
    using Error::Error;
};

// Malformed record in a serialized artifact; carries the 1-based line number.
class FormatError : public Error {
public:
    FormatError(const std::string& what, int line)
        : Error(what + " (line " + std::to_string(line) + ")"), line(line) {}
    int line;
};

// A structural invariant of a graph or spec does not hold.
class InvariantError : public Error {
public:
    using Error::Error;
};

class InvalidNodeId : public Error {
public:
    explicit InvalidNodeId(std::int64_t id)
        : Error("unknown node id " + std::to_string(id)), id(id) {}
    std::int64_t id;
};

class ConfigError : public Error {
public:
    using Error::Error;
};

}  // namespace queryforge
