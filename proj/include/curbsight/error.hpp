#pragma once

#include <stdexcept>
#include <string>

namespace curbsight {

// Runtime failure while processing inputs (unreadable file, bad service
// response, corrupt store, ...). The CLI maps this to exit code 1.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Bad usage or configuration. The CLI maps this to exit code 2.
class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

} // namespace curbsight
