#pragma once

#include <stdexcept>
#include <string>

namespace ecgiot {

// Root of every exception thrown by the library.
class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// A configuration value violates its invariant. field() names the offender.
class ConfigError : public Error {
public:
    ConfigError(std::string field, const std::string& detail)
        : Error(field + ": " + detail), field_(std::move(field)) {}

    const std::string& field() const noexcept { return field_; }

private:
    std::string field_;
};

}  // namespace ecgiot
