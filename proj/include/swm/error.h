#pragma once

#include <stdexcept>
#include <string>

namespace swm {

// Base for every error raised by the library. `kind()` is a stable
// machine-readable tag; the CLI prints it verbatim on failure.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

class ShapeError : public Error {
public:
    explicit ShapeError(const std::string& message) : Error("shape", message) {}
};

class DegenerateError : public Error {
public:
    explicit DegenerateError(const std::string& message) : Error("degenerate", message) {}
};

class ConfigError : public Error {
public:
    explicit ConfigError(const std::string& message) : Error("config", message) {}
};

class InputError : public Error {
public:
    explicit InputError(const std::string& message) : Error("input", message) {}
};

class IoError : public Error {
public:
    explicit IoError(const std::string& message) : Error("io", message) {}
};

class PlanError : public Error {
public:
    explicit PlanError(const std::string& message) : Error("plan", message) {}
};

class InfeasibleError : public Error {
public:
    explicit InfeasibleError(const std::string& message) : Error("infeasible", message) {}
};

}  // namespace swm
