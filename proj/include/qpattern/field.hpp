#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace qpattern {

enum class Boundary { periodic, dirichlet };

/// Uniform 1-D grid carrying n_comp fields.
///
/// Periodic points sit at j*L/n for j = 0..n-1. Dirichlet points use the same
/// spacing with xi_0 = 0 pinned to zero; the right wall xi_n = L is implicit.
struct Grid {
    std::size_t n_comp = 1;
    std::size_t n_grid = 0;
    double length = 1.0;
    Boundary boundary = Boundary::periodic;

    double dx() const noexcept { return length / static_cast<double>(n_grid); }
    std::size_t size() const noexcept { return n_comp * n_grid; }
    /// Resolved modes per component: n for periodic, n - 1 for Dirichlet.
    std::size_t n_modes() const noexcept {
        return boundary == Boundary::periodic ? n_grid : n_grid - 1;
    }
    /// Wavenumber of mode index m (see ModeTransform for the ordering).
    double wavenumber(std::size_t m) const noexcept;
    /// Integer harmonic index k of mode m, used by the dealiasing rule.
    std::size_t harmonic(std::size_t m) const noexcept;

    /// Throws InvalidArgument unless n_grid is a power of two >= 8, n_comp >= 1
    /// and length > 0.
    void validate() const;

    bool operator==(const Grid&) const = default;
};

/// Component-major values: entry (c, j) lives at c * n_grid + j.
struct Field {
    Grid grid;
    std::vector<double> values;

    Field() = default;
    explicit Field(const Grid& g) : grid(g), values(g.size(), 0.0) {}
    Field(const Grid& g, std::vector<double> v);

    double& at(std::size_t c, std::size_t j) { return values[c * grid.n_grid + j]; }
    double at(std::size_t c, std::size_t j) const { return values[c * grid.n_grid + j]; }
    std::span<double> component(std::size_t c) {
        return {values.data() + c * grid.n_grid, grid.n_grid};
    }
    std::span<const double> component(std::size_t c) const {
        return {values.data() + c * grid.n_grid, grid.n_grid};
    }

    /// Throws NonFinite on any non-finite entry and InvalidArgument on a
    /// nonzero Dirichlet wall value.
    void validate() const;
};

double sup_norm(std::span<const double> v) noexcept;
double sup_distance(std::span<const double> a, std::span<const double> b) noexcept;
/// Grid L2 norm sqrt(dx * sum v^2) summed over components.
double l2_norm(const Field& f);

/// Periodic rotation by r grid points: out(xi) = in(xi - r dx).
Field rotate(const Field& f, long r);

/// Throws GridMismatch when the grids differ.
void require_same_grid(const Grid& a, const Grid& b);

}  // namespace qpattern
