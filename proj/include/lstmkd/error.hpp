#pragma once

#include <stdexcept>
#include <string>

namespace lstmkd {

// Every failure surfaced by the library carries a short machine-readable code
// (e.g. "shape_mismatch") next to the human-readable message. The CLI prints
// both as `error: <code>: <message>`.
class Error : public std::runtime_error {
public:
    Error(std::string code, const std::string &message)
        : std::runtime_error(message), code_(std::move(code)) {}

    const std::string &code() const noexcept { return code_; }

private:
    std::string code_;
};

[[noreturn]] inline void fail(const std::string &code, const std::string &message) {
    throw Error(code, message);
}

inline void require(bool condition, const std::string &code, const std::string &message) {
    if (!condition) {
        fail(code, message);
    }
}

} // namespace lstmkd
