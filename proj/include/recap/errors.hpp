#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace recap {

// All pipeline failures carry a stable machine-readable kind ("EmptyText",
// "InsufficientHistory", ...) next to the human message, so callers and tests
// can dispatch without parsing prose.
class Error : public std::runtime_error {
public:
    Error(std::string kind, const std::string& message)
        : std::runtime_error(kind + ": " + message), kind_(std::move(kind)) {}

    const std::string& kind() const noexcept { return kind_; }

private:
    std::string kind_;
};

[[noreturn]] inline void fail(std::string kind, const std::string& message) {
    throw Error(std::move(kind), message);
}

}  // namespace recap
