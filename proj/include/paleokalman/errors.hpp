#ifndef PALEOKALMAN_ERRORS_HPP
#define PALEOKALMAN_ERRORS_HPP

#include <cstddef>
#include <stdexcept>
#include <string>

namespace paleokalman {

/// Base class of every error thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Time stamps not strictly increasing. `index` is the offending position.
class OrderingError : public Error {
public:
    OrderingError(const std::string& what, std::size_t index)
        : Error(what), index_(index) {}
    std::size_t index() const noexcept { return index_; }

private:
    std::size_t index_;
};

/// More simultaneous measurements than a row can hold.
class CapacityError : public Error {
public:
    using Error::Error;
};

/// Malformed input value. `line` is 1-based, 0 when unknown.
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t line = 0)
        : Error(what), line_(line) {}
    std::size_t line() const noexcept { return line_; }

private:
    std::size_t line_;
};

/// Input table lacks a required column.
class SchemaError : public Error {
public:
    using Error::Error;
};

/// Argument outside the mathematical domain of an operation.
class DomainError : public Error {
public:
    using Error::Error;
};

/// Age outside the climate-state table.
class OutOfRangeError : public DomainError {
public:
    using DomainError::DomainError;
};

/// Numerically non-positive innovation variance. `row` is the data row.
class ConditioningError : public Error {
public:
    ConditioningError(const std::string& what, std::size_t row)
        : Error(what), row_(row) {}
    std::size_t row() const noexcept { return row_; }

private:
    std::size_t row_;
};

/// Objective not finite at the starting point of an optimization.
class InitializationError : public Error {
public:
    using Error::Error;
};

/// Brute-force computation refused because the instance is too large.
class RefusalError : public Error {
public:
    using Error::Error;
};

/// Parameter vector or fit file incompatible with the model/data.
class MismatchError : public Error {
public:
    using Error::Error;
};

}  // namespace paleokalman

#endif  // PALEOKALMAN_ERRORS_HPP
