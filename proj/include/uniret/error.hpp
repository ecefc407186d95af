#pragma once

#include <stdexcept>
#include <string>

namespace uniret {

/// Error with a stable machine-readable category, e.g. "duplicate-id" or
/// "dimension-mismatch". The CLI prints these as `error: <category>: <what>`.
class Error : public std::runtime_error {
public:
    Error(std::string category, const std::string& message)
        : std::runtime_error(message), category_(std::move(category)) {}

    const std::string& category() const noexcept { return category_; }

    std::string line() const { return "error: " + category_ + ": " + what(); }

private:
    std::string category_;
};

[[noreturn]] inline void fail(std::string category, const std::string& message) {
    throw Error(std::move(category), message);
}

} // namespace uniret
