#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace tpshock {

// Numerical failure with a short machine-checkable code ("ComplexSpeeds",
// "BlowUp", ...). The CLI maps these to the numerical-failure exit code and
// prints the code as the failing stage.
class NumericalError : public std::runtime_error {
public:
    NumericalError(std::string code, const std::string& detail)
        : std::runtime_error(code + ": " + detail), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

// Problems with the run configuration (schema, ranges, unknown keys).
class ConfigError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

}  // namespace tpshock
