#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace wda {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Operand shapes do not agree (e.g. P is d x p but X has d' != d rows).
class DimensionError : public Error {
public:
    DimensionError(const std::string& what, std::ptrdiff_t expected, std::ptrdiff_t actual)
        : Error(what + ": expected " + std::to_string(expected) + ", got " + std::to_string(actual)),
          expected_(expected), actual_(actual) {}

    std::ptrdiff_t expected() const noexcept { return expected_; }
    std::ptrdiff_t actual() const noexcept { return actual_; }

private:
    std::ptrdiff_t expected_;
    std::ptrdiff_t actual_;
};

/// A configuration value is out of range (negative lambda, tol <= 0, ...).
class ParameterError : public Error {
public:
    using Error::Error;
};

/// An input lies outside the domain of a map (nonpositive scaling vector,
/// zero trace-ratio denominator, negative transport weight, ...).
class DomainError : public Error {
public:
    using Error::Error;
};

/// A numerical routine broke down (eigensolver failure, invariant violated).
class NumericError : public Error {
public:
    using Error::Error;
};

/// Malformed input file. Row and column are 1-based; 0 means "not applicable".
class ParseError : public Error {
public:
    ParseError(const std::string& what, std::size_t row, std::size_t column)
        : Error(format(what, row, column)), row_(row), column_(column) {}

    std::size_t row() const noexcept { return row_; }
    std::size_t column() const noexcept { return column_; }

private:
    static std::string format(const std::string& what, std::size_t row, std::size_t column) {
        std::string out = what;
        if (row != 0) out += " (row " + std::to_string(row);
        if (column != 0) out += (row != 0 ? ", column " : " (column ") + std::to_string(column);
        if (row != 0 || column != 0) out += ")";
        return out;
    }

    std::size_t row_;
    std::size_t column_;
};

namespace detail {

inline void require_same(const char* what, std::ptrdiff_t expected, std::ptrdiff_t actual) {
    if (expected != actual) throw DimensionError(what, expected, actual);
}

}  // namespace detail
}  // namespace wda
