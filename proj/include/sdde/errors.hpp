#pragma once

#include <stdexcept>
#include <string>

namespace sdde {

enum class ErrorCode {
    Config,               // malformed input, bad dimensions, non-integer N
    Domain,               // lag outside span, wrong perturbation kind
    NoCriticalPair,
    UnstableExtraRoots,
    WindowTooSmall,
    DegenerateRoot,
    NoZeroRoot,
    CenteringViolated,
    DecayNotReached,
    NotNormalizable,
    Precondition,
    Numeric,              // NaN, overflow, failed fit
};

const char* error_name(ErrorCode code);

// Process exit status used by the CLI for each code.
int exit_status(ErrorCode code);

class Error : public std::runtime_error {
public:
    Error(ErrorCode code, const std::string& what)
        : std::runtime_error(what), code_(code) {}
    ErrorCode code() const { return code_; }

private:
    ErrorCode code_;
};

[[noreturn]] inline void fail(ErrorCode code, const std::string& what) { throw Error(code, what); }

inline void require(bool ok, ErrorCode code, const std::string& what) {
    if (!ok) fail(code, what);
}

}  // namespace sdde
