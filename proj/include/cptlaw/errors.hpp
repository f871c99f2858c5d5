#pragma once

#include <stdexcept>
#include <string>

namespace cptlaw {

// Error taxonomy maps onto CLI exit codes: config=1, data=2, fit=3.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

class DataError : public Error {
public:
    explicit DataError(const std::string& msg) : Error(msg) {}
};

class FitError : public Error {
public:
    explicit FitError(const std::string& msg) : Error(msg) {}
};

} // namespace cptlaw
