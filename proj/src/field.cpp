#include "qpattern/field.hpp"

#include <cmath>
#include <numbers>

#include "qpattern/error.hpp"

namespace qpattern {

double Grid::wavenumber(std::size_t m) const noexcept {
    if (boundary == Boundary::dirichlet) {
        return static_cast<double>(m + 1) * std::numbers::pi / length;
    }
    return 2.0 * std::numbers::pi * static_cast<double>(harmonic(m)) / length;
}

std::size_t Grid::harmonic(std::size_t m) const noexcept {
    if (boundary == Boundary::dirichlet) {
        return m + 1;
    }
    if (m == n_grid - 1) {
        return n_grid / 2;
    }
    return (m + 1) / 2;
}

void Grid::validate() const {
    require(n_comp >= 1, "grid: n_comp must be at least 1");
    require(n_grid >= 8 && (n_grid & (n_grid - 1)) == 0,
            "grid: n_grid must be a power of two and at least 8");
    require(length > 0.0 && std::isfinite(length), "grid: domain length must be positive");
}

Field::Field(const Grid& g, std::vector<double> v) : grid(g), values(std::move(v)) {
    require(values.size() == grid.size(), "field: value count does not match grid");
}

void Field::validate() const {
    grid.validate();
    require(values.size() == grid.size(), "field: value count does not match grid");
    for (double v : values) {
        if (!std::isfinite(v)) {
            fail(ErrorKind::non_finite, "field: non-finite entry");
        }
    }
    if (grid.boundary == Boundary::dirichlet) {
        for (std::size_t c = 0; c < grid.n_comp; ++c) {
            require(at(c, 0) == 0.0, "field: Dirichlet wall entry must be zero");
        }
    }
}

double sup_norm(std::span<const double> v) noexcept {
    double m = 0.0;
    for (double x : v) {
        m = std::max(m, std::abs(x));
    }
    return m;
}

double sup_distance(std::span<const double> a, std::span<const double> b) noexcept {
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

double l2_norm(const Field& f) {
    double s = 0.0;
    for (double x : f.values) {
        s += x * x;
    }
    return std::sqrt(f.grid.dx() * s);
}

Field rotate(const Field& f, long r) {
    require(f.grid.boundary == Boundary::periodic, "rotate: periodic grids only");
    Field out(f.grid);
    auto n = static_cast<long>(f.grid.n_grid);
    long shift = ((r % n) + n) % n;
    for (std::size_t c = 0; c < f.grid.n_comp; ++c) {
        for (long j = 0; j < n; ++j) {
            out.at(c, static_cast<std::size_t>((j + shift) % n)) = f.at(c, static_cast<std::size_t>(j));
        }
    }
    return out;
}

void require_same_grid(const Grid& a, const Grid& b) {
    if (!(a == b)) {
        fail(ErrorKind::grid_mismatch, "grids differ in shape, length or boundary");
    }
}

}  // namespace qpattern
