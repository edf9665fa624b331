#pragma once

#include <stdexcept>
#include <string>
#include <string_view>

namespace qpattern {

enum class ErrorKind {
    invalid_argument,
    non_finite,
    zero_mode,
    grid_mismatch,
    not_irreducible,
    no_killing,
    step_too_large,
    extinction,
    no_linear_tail,
    not_stationary,
    degenerate_weights,
    not_converged,
    stencil_overflow,
    insufficient_sweep,
    parse_error,
    validation_error,
    corrupt_checkpoint,
    io_error,
};

std::string_view to_string(ErrorKind kind) noexcept;

/// Numerical failures (blow-up, extinction) versus configuration problems;
/// the CLI maps these onto distinct exit codes.
bool is_numerical(ErrorKind kind) noexcept;

class Error : public std::runtime_error {
public:
    Error(ErrorKind kind, const std::string& what)
        : std::runtime_error(what), kind_(kind) {}

    ErrorKind kind() const noexcept { return kind_; }

private:
    ErrorKind kind_;
};

[[noreturn]] inline void fail(ErrorKind kind, const std::string& what) {
    throw Error(kind, what);
}

inline void require(bool condition, const std::string& what) {
    if (!condition) {
        throw Error(ErrorKind::invalid_argument, what);
    }
}

}  // namespace qpattern
