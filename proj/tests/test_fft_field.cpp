#include <doctest.h>

#include <cmath>
#include <complex>
#include <numbers>
#include <vector>

#include "qpattern/error.hpp"
#include "qpattern/fft.hpp"
#include "qpattern/field.hpp"
#include "qpattern/rng.hpp"

using namespace qpattern;

namespace {

std::vector<double> random_row(std::size_t n, std::uint64_t seed) {
    CounterStream s(seed, 0, 0);
    std::vector<double> v(n);
    for (double& x : v) x = s.normal();
    return v;
}

Grid periodic(std::size_t n, double L = 2.0) { return Grid{1, n, L, Boundary::periodic}; }

}  // namespace

TEST_CASE("fft matches the direct DFT") {
    const std::size_t n = 16;
    auto re = random_row(n, 1), im = random_row(n, 2);
    std::vector<std::complex<double>> x(n);
    for (std::size_t j = 0; j < n; ++j) x[j] = {re[j], im[j]};
    auto y = x;
    Fft(n).forward(y);
    for (std::size_t k = 0; k < n; ++k) {
        std::complex<double> d = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            d += x[j] * std::polar(1.0, -2.0 * std::numbers::pi * static_cast<double>(j * k) / n);
        }
        CHECK(std::abs(y[k] - d) < 1e-12);
    }
    Fft(n).inverse(y);
    for (std::size_t j = 0; j < n; ++j) CHECK(std::abs(y[j] / static_cast<double>(n) - x[j]) < 1e-13);
}

TEST_CASE("fft rejects lengths that are not powers of two") {
    CHECK_THROWS_AS(Fft(12), std::exception);
}

TEST_CASE("mode transform round-trips and is orthonormal") {
    for (Boundary b : {Boundary::periodic, Boundary::dirichlet}) {
        Grid g{1, 32, 3.0, b};
        ModeTransform t(g);
        auto row = random_row(g.n_grid, 5);
        if (b == Boundary::dirichlet) row[0] = 0.0;
        std::vector<double> c(g.n_modes()), back(g.n_grid);
        t.to_modes(row, c);
        t.to_grid(c, back);
        for (std::size_t j = 0; j < g.n_grid; ++j) CHECK(back[j] == doctest::Approx(row[j]).epsilon(1e-12));
        // Parseval with dx-weighted quadrature.
        double e_grid = 0.0, e_modes = 0.0;
        for (double v : row) e_grid += v * v * g.dx();
        for (double v : c) e_modes += v * v;
        CHECK(e_modes == doctest::Approx(e_grid).epsilon(1e-12));
    }
}

TEST_CASE("single basis functions land on their own mode") {
    Grid g = periodic(16, 2.0);
    ModeTransform t(g);
    const double L = g.length;
    std::vector<double> row(g.n_grid), c(g.n_modes());
    for (std::size_t j = 0; j < g.n_grid; ++j) {
        double x = static_cast<double>(j) * g.dx();
        row[j] = std::sqrt(2.0 / L) * std::sin(2.0 * std::numbers::pi * 3.0 * x / L);
    }
    t.to_modes(row, c);
    for (std::size_t m = 0; m < c.size(); ++m) CHECK(c[m] == doctest::Approx(m == 6 ? 1.0 : 0.0).epsilon(1e-12));
    CHECK(g.harmonic(6) == 3);
    CHECK(g.wavenumber(6) == doctest::Approx(2.0 * std::numbers::pi * 3.0 / L));
    CHECK(g.harmonic(15) == 8);
}

TEST_CASE("circular correlation matches its definition") {
    const std::size_t n = 16;
    auto a = random_row(n, 7), b = random_row(n, 8);
    auto r = circular_correlation(a, b);
    for (std::size_t s = 0; s < n; ++s) {
        double direct = 0.0;
        for (std::size_t j = 0; j < n; ++j) direct += a[j] * b[(j + n - s) % n];
        CHECK(r[s] == doctest::Approx(direct).epsilon(1e-12));
    }
}

TEST_CASE("rotation and norms") {
    Grid g{2, 8, 4.0, Boundary::periodic};
    Field f(g);
    for (std::size_t j = 0; j < 8; ++j) {
        f.at(0, j) = static_cast<double>(j);
        f.at(1, j) = -static_cast<double>(j);
    }
    Field r = rotate(f, 3);
    CHECK(r.at(0, 3) == 0.0);
    CHECK(r.at(1, 0) == -5.0);
    CHECK(l2_norm(r) == doctest::Approx(l2_norm(f)));
    CHECK(sup_norm(f.values) == 7.0);
    CHECK(sup_distance(f.values, r.values) > 0.0);
    Field back = rotate(r, -3);
    CHECK(back.values == f.values);
}

TEST_CASE("validation errors") {
    CHECK_THROWS_AS(periodic(12).validate(), std::exception);
    Grid g = periodic(8);
    Field f(g);
    f.values[2] = std::nan("");
    CHECK_THROWS_AS(f.validate(), Error);
    Grid d{1, 8, 1.0, Boundary::dirichlet};
    Field w(d);
    w.at(0, 0) = 1.0;
    CHECK_THROWS(w.validate());
    CHECK_THROWS_AS(require_same_grid(g, d), Error);
}
