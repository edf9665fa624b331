#include "qpattern/error.hpp"

namespace qpattern {

std::string_view to_string(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::invalid_argument: return "InvalidArgument";
        case ErrorKind::non_finite: return "NonFinite";
        case ErrorKind::zero_mode: return "ZeroMode";
        case ErrorKind::grid_mismatch: return "GridMismatch";
        case ErrorKind::not_irreducible: return "NotIrreducible";
        case ErrorKind::no_killing: return "NoKilling";
        case ErrorKind::step_too_large: return "StepTooLarge";
        case ErrorKind::extinction: return "Extinction";
        case ErrorKind::no_linear_tail: return "NoLinearTail";
        case ErrorKind::not_stationary: return "NotStationary";
        case ErrorKind::degenerate_weights: return "DegenerateWeights";
        case ErrorKind::not_converged: return "NotConverged";
        case ErrorKind::stencil_overflow: return "StencilOverflow";
        case ErrorKind::insufficient_sweep: return "InsufficientSweep";
        case ErrorKind::parse_error: return "ParseError";
        case ErrorKind::validation_error: return "ValidationError";
        case ErrorKind::corrupt_checkpoint: return "CorruptCheckpoint";
        case ErrorKind::io_error: return "IoError";
    }
    return "Unknown";
}

bool is_numerical(ErrorKind kind) noexcept {
    switch (kind) {
        case ErrorKind::non_finite:
        case ErrorKind::extinction:
        case ErrorKind::zero_mode:
        case ErrorKind::not_irreducible:
        case ErrorKind::no_killing:
        case ErrorKind::step_too_large:
        case ErrorKind::no_linear_tail:
        case ErrorKind::not_stationary:
        case ErrorKind::degenerate_weights:
        case ErrorKind::not_converged:
        case ErrorKind::stencil_overflow:
            return true;
        default:
            return false;
    }
}

}  // namespace qpattern
