#include "qpattern/fft.hpp"

#include <cmath>
#include <numbers>

#include "qpattern/error.hpp"

namespace qpattern {

namespace {

bool is_power_of_two(std::size_t n) { return n >= 1 && (n & (n - 1)) == 0; }

// Scratch reused per thread; every transform fully overwrites what it reads.
std::vector<std::complex<double>>& scratch(std::size_t n) {
    thread_local std::vector<std::complex<double>> buffer;
    buffer.resize(n);
    return buffer;
}

}  // namespace

Fft::Fft(std::size_t n) : n_(n), bitrev_(n), twiddle_(n / 2) {
    require(is_power_of_two(n), "fft: length must be a power of two");
    std::size_t bits = 0;
    while ((std::size_t{1} << bits) < n) {
        ++bits;
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t r = 0;
        for (std::size_t b = 0; b < bits; ++b) {
            r |= ((i >> b) & 1u) << (bits - 1 - b);
        }
        bitrev_[i] = r;
    }
    for (std::size_t k = 0; k < n / 2; ++k) {
        double angle = -2.0 * std::numbers::pi * static_cast<double>(k) / static_cast<double>(n);
        twiddle_[k] = {std::cos(angle), std::sin(angle)};
    }
}

void Fft::forward(std::span<std::complex<double>> data) const { transform(data, false); }
void Fft::inverse(std::span<std::complex<double>> data) const { transform(data, true); }

void Fft::transform(std::span<std::complex<double>> data, bool inverse) const {
    require(data.size() == n_, "fft: buffer length mismatch");
    for (std::size_t i = 0; i < n_; ++i) {
        if (i < bitrev_[i]) {
            std::swap(data[i], data[bitrev_[i]]);
        }
    }
    for (std::size_t len = 2; len <= n_; len <<= 1) {
        std::size_t half = len / 2;
        std::size_t stride = n_ / len;
        for (std::size_t start = 0; start < n_; start += len) {
            for (std::size_t k = 0; k < half; ++k) {
                std::complex<double> w = twiddle_[k * stride];
                if (inverse) {
                    w = std::conj(w);
                }
                std::complex<double> a = data[start + k];
                std::complex<double> b = data[start + k + half] * w;
                data[start + k] = a + b;
                data[start + k + half] = a - b;
            }
        }
    }
}

ModeTransform::ModeTransform(const Grid& grid)
    : grid_(grid),
      fft_(grid.boundary == Boundary::periodic ? grid.n_grid : 2 * grid.n_grid) {
    grid_.validate();
    double L = grid_.length;
    forward_scale_ = grid_.dx() * std::sqrt(2.0 / L);
    inverse_scale_ = std::sqrt(2.0 / L);
}

void ModeTransform::to_modes(std::span<const double> row, std::span<double> coeffs) const {
    const std::size_t n = grid_.n_grid;
    const double L = grid_.length;
    const double dx = grid_.dx();
    if (grid_.boundary == Boundary::periodic) {
        auto& buf = scratch(n);
        for (std::size_t j = 0; j < n; ++j) {
            buf[j] = {row[j], 0.0};
        }
        fft_.forward(buf);
        coeffs[0] = dx * buf[0].real() / std::sqrt(L);
        for (std::size_t k = 1; k < n / 2; ++k) {
            coeffs[2 * k - 1] = forward_scale_ * buf[k].real();
            coeffs[2 * k] = -forward_scale_ * buf[k].imag();
        }
        coeffs[n - 1] = dx * buf[n / 2].real() / std::sqrt(L);
        return;
    }
    // Odd extension of length 2n turns the sine sum into -Im(FFT)/2.
    auto& buf = scratch(2 * n);
    buf[0] = {0.0, 0.0};
    buf[n] = {0.0, 0.0};
    for (std::size_t j = 1; j < n; ++j) {
        buf[j] = {row[j], 0.0};
        buf[2 * n - j] = {-row[j], 0.0};
    }
    fft_.forward(buf);
    for (std::size_t k = 1; k < n; ++k) {
        coeffs[k - 1] = forward_scale_ * (-0.5 * buf[k].imag());
    }
}

void ModeTransform::to_grid(std::span<const double> coeffs, std::span<double> row) const {
    const std::size_t n = grid_.n_grid;
    const double L = grid_.length;
    if (grid_.boundary == Boundary::periodic) {
        auto& buf = scratch(n);
        double half = 0.5 * inverse_scale_;
        buf[0] = {coeffs[0] / std::sqrt(L), 0.0};
        for (std::size_t k = 1; k < n / 2; ++k) {
            std::complex<double> z{half * coeffs[2 * k - 1], -half * coeffs[2 * k]};
            buf[k] = z;
            buf[n - k] = std::conj(z);
        }
        buf[n / 2] = {coeffs[n - 1] / std::sqrt(L), 0.0};
        fft_.inverse(buf);
        for (std::size_t j = 0; j < n; ++j) {
            row[j] = buf[j].real();
        }
        return;
    }
    auto& buf = scratch(2 * n);
    buf[0] = {0.0, 0.0};
    buf[n] = {0.0, 0.0};
    for (std::size_t k = 1; k < n; ++k) {
        buf[k] = {coeffs[k - 1], 0.0};
        buf[2 * n - k] = {-coeffs[k - 1], 0.0};
    }
    fft_.forward(buf);
    row[0] = 0.0;
    for (std::size_t j = 1; j < n; ++j) {
        row[j] = inverse_scale_ * (-0.5 * buf[j].imag());
    }
}

std::vector<double> ModeTransform::forward(const Field& f) const {
    require_same_grid(f.grid, grid_);
    std::size_t nm = grid_.n_modes();
    std::vector<double> out(grid_.n_comp * nm);
    for (std::size_t c = 0; c < grid_.n_comp; ++c) {
        to_modes(f.component(c), std::span<double>(out.data() + c * nm, nm));
    }
    return out;
}

Field ModeTransform::inverse(std::span<const double> coeffs) const {
    std::size_t nm = grid_.n_modes();
    require(coeffs.size() == grid_.n_comp * nm, "mode transform: coefficient count mismatch");
    Field f(grid_);
    for (std::size_t c = 0; c < grid_.n_comp; ++c) {
        to_grid(coeffs.subspan(c * nm, nm), f.component(c));
    }
    return f;
}

std::vector<double> circular_correlation(std::span<const double> a, std::span<const double> b) {
    require(a.size() == b.size(), "correlation: length mismatch");
    std::size_t n = a.size();
    Fft fft(n);
    std::vector<std::complex<double>> fa(n), fb(n);
    for (std::size_t j = 0; j < n; ++j) {
        fa[j] = {a[j], 0.0};
        fb[j] = {b[j], 0.0};
    }
    fft.forward(fa);
    fft.forward(fb);
    for (std::size_t k = 0; k < n; ++k) {
        fa[k] *= std::conj(fb[k]);
    }
    fft.inverse(fa);
    std::vector<double> out(n);
    for (std::size_t s = 0; s < n; ++s) {
        out[s] = fa[s].real() / static_cast<double>(n);
    }
    return out;
}

}  // namespace qpattern
