#pragma once

#include <cstddef>
#include <optional>
#include <string>
#include <vector>

#include "qpattern/field.hpp"
#include "qpattern/polynomial.hpp"

namespace qpattern {

/// dX = (D d_xx X - a X + N(X)) dt + sigma B dW on a 1-D grid.
///
/// Diffusion and damping are per component; a single entry broadcasts.
/// B is diagonal in the mode basis: b_multipliers holds one entry, one per
/// mode (shared by all components) or one per (component, mode).
struct ModelSpec {
    Grid grid;
    std::vector<double> diffusion{1.0};
    std::vector<double> damping{0.0};
    Polynomial reaction;
    std::vector<double> b_multipliers{1.0};
    double sigma = 0.0;
    /// Lipschitz bound of N on the tube, when known.
    std::optional<double> kappa_bound;
    /// Zero harmonics above 2n/3 in the nonlinear term.
    bool dealias = true;

    double d(std::size_t c) const { return diffusion.size() == 1 ? diffusion[0] : diffusion[c]; }
    double a(std::size_t c) const { return damping.size() == 1 ? damping[0] : damping[c]; }
    double b(std::size_t c, std::size_t m) const;
    /// lambda = d q_m^2 + a for component c.
    double lambda(std::size_t c, std::size_t m) const;
    /// Smallest lambda over components and modes.
    double omega() const;

    /// Structural checks (sizes, signs, finiteness); InvalidArgument on failure.
    /// The decay and Lipschitz conditions are reported by validate_assumptions.
    void validate() const;
};

struct AssumptionReport {
    double omega = 0.0;
    std::optional<double> kappa;
    double b_min = 0.0;
    double b_max = 0.0;
    bool omega_positive = false;
    /// kappa in (0, omega); unset kappa counts as unchecked, not violated.
    bool kappa_in_range = true;
    bool b_bounded = false;
    std::vector<std::string> warnings;

    bool ok() const noexcept { return omega_positive && kappa_in_range && b_bounded; }
};

/// Evaluates the decay, Lipschitz and noise-multiplier conditions that the
/// existence and uniqueness results rest on. Violations become warnings, not
/// errors: they are sufficient conditions, not necessary ones.
AssumptionReport validate_assumptions(const ModelSpec& spec,
                                      std::optional<double> kappa = std::nullopt);

/// Supremum over the given states of the induced infinity-norm of the pointwise
/// reaction Jacobian: a Lipschitz bound for N on their neighbourhood.
double reaction_lipschitz(const ModelSpec& spec, const std::vector<Field>& states);

}  // namespace qpattern
