#pragma once

#include <stdexcept>
#include <string>

namespace iagc {

struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor construction with an invalid shape (zero extent, empty shape).
struct InvalidShape : Error {
    using Error::Error;
};

// Operand shapes incompatible with the requested operation.
struct ShapeError : Error {
    using Error::Error;
};

// Input outside an op's documented domain (ln of a non-positive value).
struct DomainError : Error {
    using Error::Error;
};

// Taylor order below 1.
struct InvalidOrder : Error {
    using Error::Error;
};

// Invalid configuration value or unknown key.
struct ConfigError : Error {
    using Error::Error;
};

// Two forward passes of a supposedly pure function disagreed.
struct NonDeterministicFunction : Error {
    using Error::Error;
};

struct IoError : Error {
    using Error::Error;
};

// Malformed image header or payload.
struct FormatError : Error {
    using Error::Error;
};

struct UnsupportedFormat : Error {
    using Error::Error;
};

// Training aborted (non-finite loss); message carries diagnostics.
struct TrainAbort : Error {
    using Error::Error;
};

}  // namespace iagc
