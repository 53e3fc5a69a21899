#pragma once

#include <stdexcept>
#include <string>

namespace diffsci {

/// Coarse failure category; the CLI maps each one onto a process exit code.
enum class ErrorKind {
    InvalidArgument,  // dimension / range / invariant violations
    Config,           // malformed or unknown configuration
    Io,               // file missing, truncated, bad magic
    Numerical,        // non-finite values, degenerate denominators
    ExternalPrior     // transport or protocol failure talking to a score server
};

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) { throw Error(kind, what); }

inline void require(bool ok, const std::string& what)
{
    if (!ok) fail(ErrorKind::InvalidArgument, what);
}

} // namespace diffsci
