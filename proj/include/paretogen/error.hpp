// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <stdexcept>
#include <string>

namespace paretogen {

/// Broad failure category. The CLI maps each kind onto a distinct exit code.
enum class ErrorKind { Config, Data, Numeric, Infeasible };

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

struct ConfigError : Error {
    explicit ConfigError(const std::string& what) : Error(ErrorKind::Config, what) {}
};

struct DataError : Error {
    explicit DataError(const std::string& what) : Error(ErrorKind::Data, what) {}
};

struct InvalidArchitectureError : DataError {
    explicit InvalidArchitectureError(const std::string& what) : DataError("invalid architecture: " + what) {}
};

struct TooLargeError : DataError {
    explicit TooLargeError(const std::string& what) : DataError("too large to enumerate: " + what) {}
};

struct EmptyDatasetError : DataError {
    explicit EmptyDatasetError(const std::string& what) : DataError("empty dataset: " + what) {}
};

struct NumericError : Error {
    explicit NumericError(const std::string& what) : Error(ErrorKind::Numeric, what) {}
};

inline int exit_code(ErrorKind kind) {
    switch (kind) {
    case ErrorKind::Config: return 2;
    case ErrorKind::Data: return 3;
    case ErrorKind::Numeric: return 4;
    case ErrorKind::Infeasible: return 5;
    }
    return 1;
}

}  // namespace paretogen
