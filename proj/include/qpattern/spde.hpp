#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qpattern/fft.hpp"
#include "qpattern/field.hpp"
#include "qpattern/model.hpp"
#include "qpattern/rng.hpp"

namespace qpattern {

/// Exponential-Euler integrator of the mild form with exact OU increments:
///   c' = e^{-lambda dt} (c + dt N_c) + sigma b sqrt((1 - e^{-2 lambda dt}) / (2 lambda)) xi
/// per mode. Linear part in mode space, reaction pointwise in grid space.
///
/// Immutable after construction; step() may run concurrently on distinct fields.
class SpectralStepper {
public:
    SpectralStepper(ModelSpec spec, double dt);

    const ModelSpec& spec() const noexcept { return spec_; }
    const Grid& grid() const noexcept { return spec_.grid; }
    double dt() const noexcept { return dt_; }
    /// Component-major e^{-lambda dt} per mode.
    const std::vector<double>& decay() const noexcept { return decay_; }
    /// Component-major standard deviation of the per-step noise increment.
    const std::vector<double>& noise_std() const noexcept { return noise_std_; }
    std::size_t n_noise() const noexcept { return decay_.size(); }

    /// One step in place. A null stream (or sigma = 0) gives the deterministic
    /// flow bit-for-bit. reaction_scale multiplies N (the cutoff uses it).
    void advance(Field& x, CounterStream* noise, double reaction_scale = 1.0) const;
    /// One step with caller-supplied standard normals, one per mode (component-major).
    void advance_with_normals(Field& x, std::span<const double> normals) const;

    Field step(const Field& x, CounterStream& noise) const;
    Field step_deterministic(const Field& x) const;

    /// Mode coefficients of N(x) after dealiasing; throws NonFinite on overflow.
    std::vector<double> reaction_modes(const Field& x) const;
    /// Vector field V(x) = L x + N(x) on the grid (no dealiasing of L x).
    Field drift(const Field& x) const;

    const ModeTransform& transform() const noexcept { return transform_; }

private:
    void advance_impl(Field& x, CounterStream* noise, std::span<const double> normals,
                      double reaction_scale) const;

    ModelSpec spec_;
    double dt_;
    ModeTransform transform_;
    std::vector<double> decay_;
    std::vector<double> noise_std_;
    std::vector<char> keep_reaction_;
};

/// e^{-(d q_m^2 + a) dt} for every (component, mode), component-major.
std::vector<double> semigroup_factor(const ModelSpec& spec, double dt);

/// One mild step from x. Builds a stepper per call; prefer SpectralStepper in loops.
Field step_mild(const Field& x, const ModelSpec& spec, double dt, CounterStream& noise);

/// Repeated sigma = 0 steps of size dt, plus one shorter step for any remainder.
Field evolve_deterministic(const Field& x, const ModelSpec& spec, double t, double dt);

/// Per-step increment variance sigma^2 b^2 (1 - e^{-2 lambda dt}) / (2 lambda),
/// or sigma^2 b^2 dt when lambda = 0.
double ou_increment_variance(const ModelSpec& spec, std::size_t comp, std::size_t mode, double dt);

/// Stationary variance sigma^2 b^2 / (2 lambda) of one OU mode.
/// Throws ZeroMode when lambda = 0.
double ou_stationary_variance(const ModelSpec& spec, std::size_t comp, std::size_t mode);

}  // namespace qpattern
