#pragma once

#include <stdexcept>
#include <string>

namespace mcpforge {

// Every operational failure carries a stable machine-readable code next to
// the human message, so callers can branch without parsing text.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const { return code_; }

private:
    std::string code_;
};

inline Error make_error(const std::string& code, const std::string& message) {
    return Error(code, message);
}

}  // namespace mcpforge
