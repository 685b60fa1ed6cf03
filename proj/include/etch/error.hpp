#pragma once

#include <stdexcept>
#include <string>

namespace etch {

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Bad parameters or configuration. The command line maps this to exit code 2.
class ConfigError : public Error {
public:
    using Error::Error;
};

// Broken, inconsistent or missing input data. Exit code 3.
class DataError : public Error {
public:
    using Error::Error;
};

// Unrecognized magic, malformed header, or corrupt payload.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

// Declared sizes exceed what the file actually holds or what fits in memory.
class CapacityError : public DataError {
public:
    using DataError::DataError;
};

// Filesystem failure. The message carries the offending path.
class IoError : public DataError {
public:
    using DataError::DataError;
};

}  // namespace etch
