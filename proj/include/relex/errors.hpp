#pragma once

#include <stdexcept>
#include <string>

namespace relex {

/// Bad user-supplied configuration: unknown decoder kind, missing
/// parameter, empty label set, and so on.
class ConfigError : public std::runtime_error {
public:
    explicit ConfigError(const std::string& msg) : std::runtime_error(msg) {}
};

/// An internal contract was violated (shape mismatch, index out of range).
class ContractError : public std::logic_error {
public:
    explicit ContractError(const std::string& msg) : std::logic_error(msg) {}
};

/// Malformed input file. `line` is 1-based, or 0 when not tied to a line.
class ParseError : public std::runtime_error {
public:
    ParseError(const std::string& msg, std::size_t line = 0)
        : std::runtime_error(line ? msg + " (line " + std::to_string(line) + ")" : msg),
          line_(line) {}

    std::size_t line() const { return line_; }

private:
    std::size_t line_;
};

/// Training failure (non-finite loss). Carries the step the failure occurred at.
class TrainingError : public std::runtime_error {
public:
    TrainingError(const std::string& msg, long step)
        : std::runtime_error(msg + " (step " + std::to_string(step) + ")"), step_(step) {}

    long step() const { return step_; }

private:
    long step_;
};

} // namespace relex
