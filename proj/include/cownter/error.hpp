#pragma once

#include <stdexcept>
#include <string>

namespace cownter {

// Exception categories map one-to-one onto CLI exit codes (see cli.hpp).

/// Malformed or inconsistent input data: bad files, invariant violations, bad shapes.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Non-finite values showing up in losses, gradients or parameters.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Binary file that does not follow the expected on-disk layout.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

} // namespace cownter
