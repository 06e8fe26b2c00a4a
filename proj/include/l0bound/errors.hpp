#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace l0bound {

/// Base of every error the library throws.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class ShapeError : public Error {
public:
    using Error::Error;
};

/// Malformed model or dataset file. Carries the 1-based row for CSV input (0 if not applicable).
class ParseError : public Error {
public:
    explicit ParseError(const std::string& what, std::size_t row = 0) : Error(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// A numeric value outside its admissible domain.
class RangeError : public Error {
public:
    explicit RangeError(const std::string& what, std::size_t row = 0) : Error(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// Model whose layers do not chain. `layer` is the 0-based index of the offending layer.
class ModelError : public Error {
public:
    ModelError(const std::string& what, std::size_t layer) : Error(what), layer_(layer) {}
    std::size_t layer() const noexcept { return layer_; }

private:
    std::size_t layer_;
};

class CapacityError : public Error {
public:
    using Error::Error;
};

class PreconditionError : public Error {
public:
    using Error::Error;
};

class IoError : public Error {
public:
    using Error::Error;
};

} // namespace l0bound
