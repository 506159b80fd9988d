#pragma once

#include <stdexcept>

namespace stn {

/// Malformed or inconsistent input data (corpus lines, vocabulary or checkpoint files).
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Training diverged or produced non-finite values.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Bad configuration key, value, or command-line usage.
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace stn
