#pragma once

#include <stdexcept>
#include <string>

namespace secord {

enum class ErrorKind {
    InvalidInput,
    Shape,
    Domain,
    Convergence,
    Infeasible,
    Unsupported,
    EnumerationBound,
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool cond, ErrorKind kind, const std::string& what) {
    if (!cond) fail(kind, what);
}

// exit codes used by the command-line tool
inline int exit_code(ErrorKind kind) {
    switch (kind) {
        case ErrorKind::Convergence: return 3;
        case ErrorKind::EnumerationBound: return 4;
        default: return 2;
    }
}

}  // namespace secord
