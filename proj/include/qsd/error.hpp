#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qsd {

enum class ErrorKind {
    QuadratureFailure,
    IntegratorFailure,
    NoConvergence,
    InconclusiveTail,
    NotNormalizable,
    PreconditionViolated,
    InsufficientSurvivors,
    ParseError,
    EvalError,
    InvalidArgument,
};

inline std::string_view to_string(ErrorKind k) {
    switch (k) {
        case ErrorKind::QuadratureFailure: return "QuadratureFailure";
        case ErrorKind::IntegratorFailure: return "IntegratorFailure";
        case ErrorKind::NoConvergence: return "NoConvergence";
        case ErrorKind::InconclusiveTail: return "InconclusiveTail";
        case ErrorKind::NotNormalizable: return "NotNormalizable";
        case ErrorKind::PreconditionViolated: return "PreconditionViolated";
        case ErrorKind::InsufficientSurvivors: return "InsufficientSurvivors";
        case ErrorKind::ParseError: return "ParseError";
        case ErrorKind::EvalError: return "EvalError";
        case ErrorKind::InvalidArgument: return "InvalidArgument";
    }
    return "Unknown";
}

/// Base of every error raised by the library. `kind()` lets callers (the CLI
/// in particular) map failures to exit codes without string matching.
class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(std::string(to_string(kind)) + ": " + what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

}  // namespace qsd
