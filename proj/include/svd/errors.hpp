#pragma once

#include <stdexcept>
#include <string>

namespace svd {

// Coordinate outside the declared grid extents; message names the axis.
class BoundsError : public std::runtime_error {
public:
    explicit BoundsError(const std::string& msg) : std::runtime_error(msg) {}
};

// Duplicate active coordinate at build time.
class DuplicateError : public std::runtime_error {
public:
    explicit DuplicateError(const std::string& msg) : std::runtime_error(msg) {}
};

// Invalid operator configuration (even submanifold kernel, bad stride, ...).
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

// Channel / dimension mismatch between tensors and parameters.
class ShapeError : public std::runtime_error {
public:
    explicit ShapeError(const std::string& msg) : std::runtime_error(msg) {}
};

// File-format failures carry a kind so tests can tell them apart.
class FormatError : public std::runtime_error {
public:
    enum class Kind { BadMagic, VersionMismatch, Truncated, ChecksumMismatch, Malformed };
    FormatError(Kind kind, const std::string& msg) : std::runtime_error(msg), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

class ParseError : public std::runtime_error {
public:
    explicit ParseError(const std::string& msg) : std::runtime_error(msg) {}
};

class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

class CheckpointError : public std::runtime_error {
public:
    explicit CheckpointError(const std::string& msg) : std::runtime_error(msg) {}
};

class NumericalError : public std::runtime_error {
public:
    explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

} // namespace svd
