#include <doctest.h>

#include <cmath>
#include <numbers>
#include <sstream>
#include <vector>

#include "qpattern/dynamics.hpp"
#include "qpattern/ensemble.hpp"
#include "qpattern/error.hpp"
#include "qpattern/phase.hpp"
#include "qpattern/tube.hpp"

using namespace qpattern;

namespace {

Field pulse_profile(const Grid& g) {
    Field f(g);
    for (std::size_t j = 0; j < g.n_grid; ++j) {
        double x = static_cast<double>(j) * g.dx();
        f.at(0, j) = std::exp(-0.5 * std::pow((x - 0.4 * g.length) / (0.08 * g.length), 2));
    }
    return f;
}

TubeSpec wave_tube(double delta, DistanceNorm norm = DistanceNorm::sup) {
    Grid g{1, 64, 10.0, Boundary::periodic};
    TubeSpec t;
    t.delta = delta;
    t.manifold = PatternManifold::wave(pulse_profile(g), 0.5);
    t.norm = norm;
    return t;
}

// Brute-force scan over a fine shift grid: an independent check of the search.
double scan_distance(const std::vector<double>& x, const TubeSpec& t, std::size_t n_scan) {
    double best = INFINITY;
    for (std::size_t i = 0; i < n_scan; ++i) {
        auto p = t.manifold.point(t.manifold.period_or_length * static_cast<double>(i) / static_cast<double>(n_scan));
        best = std::min(best, sup_distance(x, p));
    }
    return best;
}

ModelSpec fhn() {
    ModelSpec s;
    s.grid = Grid{2, 128, 60.0, Boundary::periodic};
    s.diffusion = {1.0, 0.05};
    s.reaction = Polynomial(2, {Polynomial::parse_component("-0.1 u0 + 1.1 u0^2 - u0^3 - u1", 2),
                                Polynomial::parse_component("0.01 u0 - 0.03 u1", 2)});
    return s;
}

Field fhn_pulse(const Grid& g, double pos) {
    Field f(g);
    for (std::size_t j = 0; j < g.n_grid; ++j) {
        double x = static_cast<double>(j) * g.dx();
        f.at(0, j) = 0.5 * (std::tanh(x - (pos - 6.0)) - std::tanh(x - pos));
        f.at(1, j) = 0.15 * 0.5 * (std::tanh(x - (pos - 12.0)) - std::tanh(x - (pos - 6.0)));
    }
    return f;
}

}  // namespace

TEST_CASE("manifold points are inside; offsets beyond delta are outside") {
    TubeSpec t = wave_tube(0.1);
    auto p = t.manifold.point(3.3);
    CHECK(is_inside(p, t));
    CHECK(tube_distance(p, t).dist < 1e-9);
    CHECK(tube_distance(p, t).phase == doctest::Approx(3.3).epsilon(1e-6));
    auto off = p;
    for (double& v : off) v += 2.0 * t.delta;
    CHECK_FALSE(is_inside(off, t));
    std::vector<double> zero(p.size(), 0.0);
    CHECK_FALSE(is_inside(zero, t));
    // The scan only brackets the kinked minimum to within its spacing.
    double dz = tube_distance(zero, t).dist;
    double scan = scan_distance(zero, t, 4096);
    CHECK(dz <= scan + 1e-9);
    CHECK(dz >= scan - 2e-4);
}

TEST_CASE("sup distance agrees with a brute-force scan") {
    TubeSpec t = wave_tube(1.0);
    CounterStream rng(5, 0, 0);
    for (int trial = 0; trial < 5; ++trial) {
        auto x = t.manifold.point(rng.uniform() * 10.0);
        for (double& v : x) v += 0.05 * rng.normal();
        double d = tube_distance(x, t).dist;
        double scan = scan_distance(x, t, 8192);
        CAPTURE(trial);
        CHECK(d <= scan + 1e-9);
        CHECK(d >= scan - 1e-4);
    }
}

TEST_CASE("distance is invariant under grid rotation") {
    TubeSpec t = wave_tube(1.0);
    const Grid& g = *t.manifold.grid;
    CounterStream rng(6, 0, 0);
    Field x(g, t.manifold.point(1.7));
    for (double& v : x.values) v += 0.03 * rng.normal();
    for (long r : {1L, 7L, 40L}) {
        CHECK(tube_distance(rotate(x, r), t).dist == doctest::Approx(tube_distance(x, t).dist).epsilon(1e-9));
        double shift = std::fmod(tube_distance(x, t).phase + static_cast<double>(r) * g.dx(), g.length);
        CHECK(tube_distance(rotate(x, r), t).phase == doctest::Approx(shift).epsilon(1e-6));
    }
}

TEST_CASE("cycle tube distance in L2 is the radial offset") {
    TubeSpec t;
    t.delta = 0.2;
    t.norm = DistanceNorm::l2;
    t.manifold = radial_twist_manifold(2.0 * std::numbers::pi, 512);
    for (double ang : {0.0, 1.0, 2.5, 5.9}) {
        std::vector<double> x{1.1 * std::cos(ang), 1.1 * std::sin(ang)};
        auto d = tube_distance(x, t);
        CHECK(d.dist == doctest::Approx(0.1).epsilon(1e-3));
        CHECK(d.phase == doctest::Approx(ang / (2.0 * std::numbers::pi)).epsilon(1e-4));
    }
    CHECK(is_inside(std::vector<double>{0.0, 0.85}, t));
    CHECK_FALSE(is_inside(std::vector<double>{0.0, 0.75}, t));
}

TEST_CASE("killed runs: invariance at sigma = 0, nesting, consistency and delta monotonicity") {
    const double omega = 2.0 * std::numbers::pi;
    PolynomialSde det(radial_twist_drift(omega, 2.0), {0.2}, 0.0, 0.01, 0.01, 0.5);
    TubeSpec t;
    t.delta = 0.05;
    t.norm = DistanceNorm::l2;
    t.manifold = radial_twist_manifold(omega, 512);
    std::vector<double> x0 = t.manifold.point(0.0);
    KilledRunOptions o;
    o.t_max = 20.0;
    o.snapshot_stride = 100;
    KilledPath still = run_killed(x0, det, t, o);
    CHECK_FALSE(still.exited);
    CHECK(std::isinf(still.tau));

    PolynomialSde noisy(radial_twist_drift(omega, 2.0), {0.2}, 1.0, 0.01, 0.01, 0.5);
    o.t_max = 5.0;
    o.snapshot_stride = 1;
    for (std::uint64_t id = 0; id < 20; ++id) {
        o.path_id = id;
        KilledPath p = run_killed(x0, noisy, t, o);
        if (p.exited) {
            CHECK(p.reason == ExitReason::left_tube);
            CHECK_FALSE(is_inside(p.snapshots.back(), t));
            for (std::size_t k = 0; k + 1 < p.snapshots.size(); ++k) REQUIRE(is_inside(p.snapshots[k], t));
            CHECK(p.times.back() == doctest::Approx(p.tau));
        }
        TubeSpec wide = t;
        wide.delta = 0.08;
        KilledPath q = run_killed(x0, noisy, wide, o);
        CHECK(q.tau >= p.tau);
    }

    DynamicsProcess proc(noisy, [&](std::span<const double> x) { return is_inside(x, t); });
    SurvivalCurve c = survival_curve(proc, [&](std::size_t) { return x0; }, 200, 300, 3);
    CHECK(c.prob.front() == 1.0);
    for (std::size_t k = 1; k < c.prob.size(); ++k) REQUIRE(c.prob[k] <= c.prob[k - 1]);
    CHECK(c.prob.back() < 0.5);
}

TEST_CASE("cycle manifold construction finds the period") {
    const double omega = 2.0 * std::numbers::pi;
    PolynomialSde det(radial_twist_drift(omega, 2.0), {0.2}, 0.0, 0.01, 0.005, 0.5);
    std::vector<double> x0{0.5, 0.0};
    PatternManifold m = build_cycle_manifold(x0, det, 10.0, 1.0, 256);
    CHECK(m.period_or_length == doctest::Approx(1.0).epsilon(1e-4));
    for (const auto& row : m.table) CHECK(std::hypot(row[0], row[1]) == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("wave manifold construction tracks a FitzHugh-Nagumo pulse") {
    ModelSpec s = fhn();
    SpdeDynamics dyn(s, 0.02);
    PatternManifold m = build_wave_manifold(fhn_pulse(s.grid, 20.0), dyn, 200.0, 50.0);
    CHECK(m.phase_velocity == doctest::Approx(0.454).epsilon(0.02));
    TubeSpec t;
    t.delta = 0.3;
    t.manifold = m;
    KilledRunOptions o;
    o.t_max = 40.0;
    o.snapshot_stride = 200;
    auto start = m.point(0.0);
    KilledPath p = run_killed(start, dyn, t, o);
    CHECK_FALSE(p.exited);
    // The relaxed profile translates at the measured speed.
    auto d = tube_distance(p.snapshots.back(), t);
    double expect = std::fmod(m.phase_velocity * p.times.back(), s.grid.length);
    CHECK(std::abs(d.phase - expect) < 0.05);
}

TEST_CASE("manifold CSV and binary round trips") {
    TubeSpec t = wave_tube(0.1);
    std::stringstream csv, bin;
    write_manifold_csv(csv, t.manifold);
    PatternManifold a = read_manifold_csv(csv);
    CHECK(a.reference == t.manifold.reference);
    CHECK(a.phase_velocity == t.manifold.phase_velocity);
    write_manifold_binary(bin, t.manifold);
    PatternManifold b = read_manifold_binary(bin);
    CHECK(b.reference == t.manifold.reference);
    CHECK(b.grid->length == t.manifold.grid->length);
    std::stringstream bad("garbage");
    CHECK_THROWS(read_manifold_binary(bad));
}

TEST_CASE("tube validation") {
    TubeSpec t = wave_tube(0.1);
    t.validity_radius = 0.05;
    CHECK_THROWS(t.validate());
    std::vector<double> wrong(10, 0.0);
    try {
        tube_distance(wrong, wave_tube(0.1));
        FAIL("accepted a wrong dimension");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::grid_mismatch);
    }
}
