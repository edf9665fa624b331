#pragma once

#include <complex>
#include <cstddef>
#include <span>
#include <vector>

#include "qpattern/field.hpp"

namespace qpattern {

/// In-place radix-2 complex FFT, unnormalized in both directions
/// (forward uses e^{-2 pi i jk/n}). Length must be a power of two.
///
/// Written out rather than linked so that every build performs the same
/// floating-point operations in the same order.
class Fft {
public:
    explicit Fft(std::size_t n);
    std::size_t size() const noexcept { return n_; }
    void forward(std::span<std::complex<double>> data) const;
    void inverse(std::span<std::complex<double>> data) const;

private:
    void transform(std::span<std::complex<double>> data, bool inverse) const;

    std::size_t n_;
    std::vector<std::size_t> bitrev_;
    std::vector<std::complex<double>> twiddle_;
};

/// Coefficients of a grid function in the real L2-orthonormal eigenbasis of
/// the Laplacian (grid quadrature with weight dx).
///
/// Periodic ordering: m = 0 constant 1/sqrt(L); m = 2k-1 and m = 2k the
/// sqrt(2/L) cos and sin of harmonic k for k = 1..n/2-1; m = n-1 the Nyquist
/// mode (-1)^j / sqrt(L). Dirichlet ordering: m = k-1 is sqrt(2/L) sin(k pi xi/L)
/// for k = 1..n-1.
class ModeTransform {
public:
    explicit ModeTransform(const Grid& grid);

    const Grid& grid() const noexcept { return grid_; }

    /// One component: n_grid samples to n_modes coefficients.
    void to_modes(std::span<const double> row, std::span<double> coeffs) const;
    /// One component: n_modes coefficients to n_grid samples.
    void to_grid(std::span<const double> coeffs, std::span<double> row) const;

    /// Whole field, component-major, n_comp * n_modes coefficients.
    std::vector<double> forward(const Field& f) const;
    Field inverse(std::span<const double> coeffs) const;

private:
    Grid grid_;
    Fft fft_;
    double forward_scale_;
    double inverse_scale_;
};

/// Circular cross-correlation r_s = sum_j a_j b_{j-s} for s = 0..n-1.
std::vector<double> circular_correlation(std::span<const double> a, std::span<const double> b);

}  // namespace qpattern
