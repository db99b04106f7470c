#pragma once

#include <stdexcept>
#include <string>
#include <utility>

namespace questlab {

// All recoverable failures carry a stable machine-readable code ("duplicate-entity",
// "no-valid-path", ...) alongside the human message. The C API maps codes to statuses.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string& message)
        : std::runtime_error(code + ": " + message), code_(std::move(code)) {}

    const std::string& code() const noexcept { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void raise(std::string code, const std::string& message) {
    throw Error(std::move(code), message);
}

inline void require(bool ok, const char* code, const std::string& message) {
    if (!ok) throw Error(code, message);
}

}  // namespace questlab
