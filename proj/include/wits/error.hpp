#pragma once

#include <stdexcept>
#include <string>

namespace wits {

enum class ErrorKind {
    invalid_input,
    numerical,
    out_of_order,
    parse,
    emission_overflow,
};

inline const char* to_string(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::invalid_input: return "invalid-input";
        case ErrorKind::numerical: return "numerical";
        case ErrorKind::out_of_order: return "out-of-order";
        case ErrorKind::parse: return "parse";
        case ErrorKind::emission_overflow: return "emission-overflow";
    }
    return "unknown";
}

/// Base error for the library. Carries a kind so callers (the CLI in
/// particular) can map failures onto exit codes.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

inline Error invalid_input(const std::string& what) {
    return Error(ErrorKind::invalid_input, what);
}

}  // namespace wits
