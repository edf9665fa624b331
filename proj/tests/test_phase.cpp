#include <doctest.h>

#include <cmath>
#include <numbers>
#include <vector>

#include "qpattern/dynamics.hpp"
#include "qpattern/ensemble.hpp"
#include "qpattern/error.hpp"
#include "qpattern/phase.hpp"
#include "qpattern/stats.hpp"

using namespace qpattern;

namespace {

constexpr double kOmega = 2.0 * std::numbers::pi;
constexpr double kBeta = 2.0;
constexpr double kB = 0.2;

struct Fixture {
    PatternManifold manifold = radial_twist_manifold(kOmega, 512);
    PolynomialSde det{radial_twist_drift(kOmega, kBeta), {kB}, 0.0, 0.01, 0.005, 0.5};
    PolynomialSde noisy{radial_twist_drift(kOmega, kBeta), {kB}, 1.0, 0.01, 0.005, 0.5};
};

Fixture& fixture() {
    static Fixture f;
    return f;
}

const IsochronMap& iso_det() {
    static IsochronMap m = [] {
        IsochronOptions o;
        o.n_directions = 2;
        return build_isochron(fixture().manifold, fixture().det, o);
    }();
    return m;
}

const IsochronMap& iso_noisy() {
    static IsochronMap m = [] {
        IsochronOptions o;
        o.n_directions = 2;
        return build_isochron(fixture().manifold, fixture().noisy, o);
    }();
    return m;
}

double wrapped(double d, double p) { return d - p * std::round(d / p); }

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::io_error;
}

}  // namespace

TEST_CASE("phase_of matches the analytic isochrons off the cycle") {
    const IsochronMap& iso = iso_det();
    double worst = 0.0;
    for (double r : {0.7, 0.9, 1.0, 1.15, 1.3}) {
        for (double th = 0.1; th < 2.0 * std::numbers::pi; th += 0.7) {
            std::vector<double> x{r * std::cos(th), r * std::sin(th)};
            double err = wrapped(iso.phase_of(x) - radial_twist_phase(x, kOmega, kBeta), 1.0);
            worst = std::max(worst, std::abs(err));
        }
    }
    CHECK(worst <= 1e-3);
}

TEST_CASE("on-manifold identity and equivariance") {
    const IsochronMap& iso = iso_det();
    const auto& m = fixture().manifold;
    for (std::size_t i = 0; i < m.table.size(); i += 37) {
        double theta = m.period_or_length * static_cast<double>(i) / static_cast<double>(m.table.size());
        CHECK(std::abs(wrapped(iso.phase_of(m.table[i]) - theta, 1.0)) < 1e-4);
    }
    std::vector<double> x{0.8, 0.3};
    for (double s : {0.05, 0.5, 1.0, 1.7, 2.0}) CHECK(iso.equivariance_error(x, s) < 1e-4);
    CHECK(iso.build_equivariance_error() < 1e-4);
    CHECK(iso.frequency() == doctest::Approx(1.0));
}

TEST_CASE("local derivatives match the closed form") {
    const IsochronMap& iso = iso_noisy();
    std::vector<double> x{1.05 * std::cos(0.4), 1.05 * std::sin(0.4)};
    IsochronMap::Local loc = iso.local(x);
    // Phase advances at unit speed under the flow everywhere in the basin.
    CHECK(loc.drift_term == doctest::Approx(1.0).epsilon(1e-4));
    // (1/2) b^2 Laplacian(psi) / omega with Laplacian(psi) = -2 beta.
    CHECK(loc.ito_term == doctest::Approx(-kB * kB * kBeta / kOmega).epsilon(1e-3));
    // |grad psi|^2 = 1 / r^2 + beta^2 r^2.
    double r2 = 1.05 * 1.05;
    double g2 = loc.noise_gradient[0] * loc.noise_gradient[0] + loc.noise_gradient[1] * loc.noise_gradient[1];
    CHECK(g2 == doctest::Approx(kB * kB * (1.0 / r2 + kBeta * kBeta * r2) / (kOmega * kOmega)).epsilon(1e-3));
    CHECK(iso.drift_integrand(x) == doctest::Approx(loc.drift_term + loc.ito_term));
}

TEST_CASE("outside the basin is reported, not guessed") {
    const IsochronMap& iso = iso_det();
    std::vector<double> origin{1e-7, 0.0};
    CHECK(kind_of([&] { iso.phase_of(origin); }) == ErrorKind::not_converged);
    // The centre itself has no phase.
    CHECK(kind_of([&] { iso.local(origin); }) == ErrorKind::not_converged);
    // A centre inside the basin whose stencil reaches the origin.
    IsochronOptions wide;
    wide.fd_step = 0.5;
    IsochronMap coarse = build_isochron(fixture().manifold, fixture().det, wide);
    std::vector<double> half{0.5, 0.0};
    CHECK_NOTHROW(coarse.phase_of(half));
    CHECK(kind_of([&] { coarse.local(half); }) == ErrorKind::stencil_overflow);
}

TEST_CASE("deterministic paths: linear phase and zero Ito residual") {
    const IsochronMap& iso = iso_det();
    TubeSpec t;
    t.delta = 0.5;
    t.norm = DistanceNorm::l2;
    t.manifold = fixture().manifold;
    KilledRunOptions o;
    o.t_max = 2.0;
    o.snapshot_stride = 10;
    KilledPath p = run_killed(std::vector<double>{0.9, 0.1}, fixture().det, t, o);
    PhaseSeries ps = phase_series(p, iso);
    REQUIRE(ps.times.size() > 2);
    for (std::size_t k = 0; k < ps.times.size(); ++k) {
        CHECK(ps.unwrapped_phase[k] - ps.unwrapped_phase[0] == doctest::Approx(ps.times[k]).epsilon(1e-5));
    }
    CHECK(ps.jump_warnings == 0);
    ItoCheck ic = ito_residual_check(p, iso);
    CHECK(ic.delta_phase == doctest::Approx(ic.drift_integral).epsilon(1e-5));
    for (double r : ic.residual) CHECK(std::abs(r) < 1e-5);
    CHECK(ic.qv_predicted == 0.0);
    KilledPath empty;
    CHECK(phase_series(empty, iso).times.empty());
}

TEST_CASE("Ito check on a handful of noisy paths") {
    const IsochronMap& iso = iso_noisy();
    TubeSpec t;
    t.delta = 0.5;
    t.norm = DistanceNorm::l2;
    t.manifold = fixture().manifold;
    std::vector<double> emp, pred, res;
    for (std::uint64_t id = 0; id < 40; ++id) {
        KilledRunOptions o;
        o.t_max = 0.25;
        o.seed = 77;
        o.path_id = id;
        KilledPath p = run_killed(t.manifold.point(0.0), fixture().noisy, t, o);
        ItoCheck ic = ito_residual_check(p, iso);
        emp.push_back(ic.qv_empirical);
        pred.push_back(ic.qv_predicted);
        res.push_back(ic.residual.back());
    }
    double ratio = mean(emp) / mean(pred);
    CHECK(ratio > 0.8);
    CHECK(ratio < 1.2);
    CHECK(std::abs(mean(res)) < 3.0 * std::sqrt(sample_variance(res) / res.size()));
}

TEST_CASE("sigma = 0 frequency is c0") {
    const IsochronMap& iso = iso_det();
    TubeSpec t;
    t.delta = 0.5;
    t.norm = DistanceNorm::l2;
    t.manifold = fixture().manifold;
    DynamicsProcess proc(fixture().det, [&](std::span<const double> x) { return is_inside(x, t); });
    FvOptions o;
    o.n_particles = 10;
    o.n_steps = 400;
    o.record_stride = 20;
    FvTimeline tl = fleming_viot_run(proc, t.manifold.point(0.0), phase_observables(iso), o);
    FrequencyEstimate f = quasi_asymptotic_frequency(tl, 0, 1, iso.period(), iso.frequency(), 1.0, 0.5);
    CHECK(f.slope == doctest::Approx(f.c0).epsilon(1e-6));
    CHECK(f.beta_integral == doctest::Approx(f.c0).epsilon(1e-6));
    CHECK(f.z_agreement < 3.0);
}

TEST_CASE("frequency decomposition of a synthetic quadratic sweep") {
    std::vector<SweepPoint> sweep;
    for (double s : {0.0, 0.1, 0.2, 0.3, 0.4}) sweep.push_back({s, 1.0 + 2.0 * s * s, 0.0, "synthetic"});
    FrequencyDecomposition d = frequency_decomposition(sweep);
    CHECK(std::abs(d.c0_hat - 1.0) <= 1e-6);
    CHECK(std::abs(d.quad_coeff - 2.0) / 2.0 <= 1e-6);
    CHECK(std::abs(d.departure_slope) < 1e-6);
    CHECK(d.c0_measured == 1.0);
    CHECK(std::isnan(d.rows[0].quad_coeff));
    for (std::size_t i = 1; i < d.rows.size(); ++i) CHECK(d.rows[i].quad_coeff == doctest::Approx(2.0));

    std::vector<SweepPoint> curved;
    for (double s : {0.0, 0.5, 1.0, 1.5}) curved.push_back({s, 1.0 - 0.1 * s * s - 0.05 * s * s * s * s, 0.001});
    FrequencyDecomposition c = frequency_decomposition(curved);
    CHECK(c.departure_slope == doctest::Approx(-0.05).epsilon(1e-6));

    std::vector<SweepPoint> few{{0.0, 1.0}, {0.1, 1.0}, {0.2, 1.0}};
    CHECK(kind_of([&] { frequency_decomposition(few); }) == ErrorKind::insufficient_sweep);
    std::vector<SweepPoint> no_zero{{0.1, 1.0}, {0.2, 1.0}, {0.3, 1.0}, {0.4, 1.0}};
    CHECK(kind_of([&] { frequency_decomposition(no_zero); }) == ErrorKind::insufficient_sweep);
}
