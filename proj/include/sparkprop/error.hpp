#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace sparkprop {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Tensor shapes that do not fit an operation.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed or unsupported input bytes. Carries the byte offset where
/// decoding stopped.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (at byte " + std::to_string(offset) + ")"), offset_(offset) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

/// A request that contradicts a documented precondition.
class InvalidArgument : public Error {
public:
    using Error::Error;
};

class NotFound : public Error {
public:
    using Error::Error;
};

/// The target exists but is not in a state that allows the request.
class Conflict : public Error {
public:
    using Error::Error;
};

}  // namespace sparkprop
