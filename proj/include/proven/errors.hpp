#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace proven {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// A layer's weights or biases do not chain with its neighbours.
class DimensionError : public Error {
public:
    DimensionError(std::size_t layer, const std::string& what)
        : Error("layer " + std::to_string(layer) + ": " + what), layer_(layer) {}

    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

class ActivationError : public Error {
public:
    using Error::Error;
};

/// Malformed JSON or schema violation; `offset` is the byte position when known.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t offset)
        : Error(what + " (byte " + std::to_string(offset) + ")"), offset_(offset) {}
    explicit ParseError(const std::string& what) : Error(what), offset_(0) {}

    std::size_t offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class ClassIndexError : public Error {
public:
    using Error::Error;
};

/// The prediction at the anchor input is not a strict argmax.
class TiedPredictionError : public Error {
public:
    using Error::Error;
};

/// NaN/overflow or an invalid numeric argument.
class NumericError : public Error {
public:
    using Error::Error;
};

class CovarianceError : public Error {
public:
    using Error::Error;
};

/// The convolution grid cannot resolve the weighted uniform components.
class ResolutionError : public Error {
public:
    using Error::Error;
};

}  // namespace proven
