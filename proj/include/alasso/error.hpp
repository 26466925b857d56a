#pragma once

#include <stdexcept>
#include <string>
#include <vector>

namespace alasso {

/// Base class for every error raised by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Malformed input data: length mismatch, non-finite values, too few rows.
class DataError : public Error {
public:
    using Error::Error;
};

/// File could not be opened, read or written.
class IoError : public Error {
public:
    using Error::Error;
};

/// Design (or Gram) matrix is numerically singular.
class SingularDesignError : public Error {
public:
    SingularDesignError(const std::string& what, std::vector<std::size_t> columns = {})
        : Error(what), columns_(std::move(columns)) {}

    /// Offending column indices, when they could be identified.
    const std::vector<std::size_t>& columns() const noexcept { return columns_; }

private:
    std::vector<std::size_t> columns_;
};

/// Iterative solver stopped before meeting its tolerance.
class ConvergenceError : public Error {
public:
    using Error::Error;
};

/// A caller broke an operation's precondition (bad index, invalid parameter).
class ContractError : public Error {
public:
    using Error::Error;
};

}  // namespace alasso
