#include <doctest.h>

#include <cmath>
#include <vector>

#include "qpattern/chain.hpp"
#include "qpattern/ensemble.hpp"
#include "qpattern/error.hpp"
#include "qpattern/stats.hpp"

using namespace qpattern;

namespace {

std::vector<Observable<std::size_t>> indicators(std::size_t n) {
    std::vector<Observable<std::size_t>> obs;
    for (std::size_t s = 0; s < n; ++s) {
        obs.push_back({"state_" + std::to_string(s), [s](const std::size_t& x) { return x == s ? 1.0 : 0.0; }});
    }
    obs.push_back({"one", [](const std::size_t&) { return 1.0; }});
    return obs;
}

FvOptions opts(std::size_t n, std::size_t steps, std::uint64_t seed, unsigned workers = 1) {
    FvOptions o;
    o.n_particles = n;
    o.n_steps = steps;
    o.seed = seed;
    o.workers = workers;
    return o;
}

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::io_error;
}

}  // namespace

TEST_CASE("particle count is conserved and resampling only copies survivors") {
    SubMarkovMatrix q = builtin_chain("three_state");
    ChainProcess proc(q);
    FlemingViot<ChainProcess> fv(proc, indicators(3), opts(500, 50, 1));
    fv.start(0);
    fv.run_until(50);
    CHECK(fv.particles().size() == 500);
    FvTimeline tl = fv.finish();
    CHECK(tl.total_events > 0);
    std::size_t kills = 0;
    for (double k : tl.kill_fraction) kills += static_cast<std::size_t>(std::lround(k * 500));
    CHECK(kills == tl.total_events);
    for (const auto& e : tl.events) CHECK(e.dead != e.donor);
}

TEST_CASE("timelines do not depend on the worker count") {
    SubMarkovMatrix q = builtin_chain("dense5");
    ChainProcess proc(q);
    FvTimeline a = fleming_viot_run(proc, std::size_t{0}, indicators(5), opts(300, 80, 7, 1));
    FvTimeline b = fleming_viot_run(proc, std::size_t{0}, indicators(5), opts(300, 80, 7, 4));
    CHECK(a.kill_fraction == b.kill_fraction);
    CHECK(a.cloud_mean == b.cloud_mean);
    CHECK(a.lineage == b.lineage);
    CHECK(a.events.size() == b.events.size());
}

TEST_CASE("snapshot and restore continue the run exactly") {
    SubMarkovMatrix q = builtin_chain("three_state");
    ChainProcess proc(q);
    FvTimeline straight = fleming_viot_run(proc, std::size_t{1}, indicators(3), opts(200, 60, 3));
    FlemingViot<ChainProcess> first(proc, indicators(3), opts(200, 60, 3));
    first.start(1);
    first.run_until(25);
    auto snap = first.snapshot();
    FlemingViot<ChainProcess> second(proc, indicators(3), opts(200, 60, 3));
    second.start(1);
    second.restore(snap);
    FvTimeline resumed = second.finish();
    CHECK(resumed.kill_fraction == straight.kill_fraction);
    CHECK(resumed.lineage == straight.lineage);
    CHECK(resumed.cloud_mean == straight.cloud_mean);
}

TEST_CASE("with killing disabled the cloud follows the unconditioned marginal") {
    auto p = SubMarkovMatrix::from_rows({{0.6, 0.4, 0.0}, {0.1, 0.6, 0.3}, {0.2, 0.2, 0.6}});
    ChainProcess proc(p);
    const std::size_t n = 4000, steps = 5;
    FvTimeline tl = fleming_viot_run(proc, std::size_t{0}, indicators(3), opts(n, steps, 5));
    CHECK(tl.total_events == 0);
    auto m = marginal(p.q, 3, 0, steps);
    for (std::size_t s = 0; s < 3; ++s) {
        double hat = tl.cloud_mean.back()[s];
        CHECK(std::abs(hat - m[s]) < 3.0 * std::sqrt(m[s] * (1 - m[s]) / n));
    }
}

TEST_CASE("extinction aborts the run") {
    auto q = SubMarkovMatrix::from_rows({{0.01, 0.0}, {0.0, 0.01}});
    ChainProcess proc(q);
    CHECK(kind_of([&] { fleming_viot_run(proc, std::size_t{0}, indicators(2), opts(5, 50, 1)); }) ==
          ErrorKind::extinction);
}

TEST_CASE("lambda1 from survival curves") {
    SurvivalCurve exact;
    for (int k = 0; k <= 40; ++k) {
        exact.times.push_back(k);
        exact.prob.push_back(std::pow(0.8, k));
    }
    Lambda1Estimate e = estimate_lambda1(exact);
    CHECK(e.lambda1 == doctest::Approx(-std::log(0.8)).epsilon(1e-12));
    CHECK(e.std_error == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(e.r2 == doctest::Approx(1.0));

    SurvivalCurve flat;
    for (int k = 0; k <= 40; ++k) {
        flat.times.push_back(k);
        flat.prob.push_back(1.0);
    }
    CHECK(kind_of([&] { estimate_lambda1(flat); }) == ErrorKind::no_linear_tail);

    // Monte Carlo from the QSD: geometric in expectation.
    SubMarkovMatrix q = builtin_chain("dense5");
    SpectralData sd = principal_eigen(q);
    auto alpha = exact_qsd(sd, q.mu);
    ChainProcess proc(q);
    auto draw = [&](std::size_t i) {
        CounterStream r(99, i, 0, StreamPurpose::initial);
        double u = r.uniform(), c = 0.0;
        for (std::size_t s = 0; s < q.n; ++s) {
            c += alpha[s];
            if (u < c) return s;
        }
        return q.n - 1;
    };
    SurvivalCurve mc = survival_curve(proc, draw, 100000, 25, 17);
    Lambda1Estimate m = estimate_lambda1(mc);
    CHECK(std::abs(m.lambda1 - sd.lambda1) < 3.0 * m.std_error);
    CHECK(m.std_error > 0.0);
}

TEST_CASE("conditioned-law estimators on the three-state chain") {
    SubMarkovMatrix q = builtin_chain("three_state");
    SpectralData sd = principal_eigen(q);
    auto alpha = exact_qsd(sd, q.mu);
    auto beta = exact_qed(sd, q.mu);
    ChainProcess proc(q);
    FlemingViot<ChainProcess> fv(proc, indicators(3), opts(4000, 150, 21));
    fv.start(0);
    fv.run_until(150);
    auto cloud = fv.particles();
    FvTimeline tl = fv.finish();
    const double burn = 10.0 / sd.gap_gamma;

    QsdSnapshot snap = qsd_snapshot(tl, burn, sd.gap_gamma);
    CHECK(snap.stationary);
    for (std::size_t s = 0; s < 3; ++s) {
        CAPTURE(s);
        CHECK(std::abs(snap.functionals[s].value - alpha[s]) < 3.0 * snap.functionals[s].std_error);
    }
    auto hist = cloud_histogram(cloud, 3, [](std::size_t s) { return s; });
    CHECK(total_variation(hist, alpha) < 0.03);
    CHECK(kind_of([&] { qsd_snapshot(tl, 1.0, sd.gap_gamma); }) == ErrorKind::invalid_argument);

    for (std::size_t s = 0; s < 3; ++s) {
        QedEstimate e = qed_time_average(tl, s, burn, 5.0 / sd.gap_gamma);
        CAPTURE(s);
        CHECK(std::abs(e.value - beta[s]) < 3.0 * e.std_error);
    }
    QedEstimate one = qed_time_average(tl, 3, burn, 5.0 / sd.gap_gamma);
    CHECK(one.value == 1.0);

    Estimate lam = fv_lambda1(tl, burn);
    CHECK(std::abs(lam.value - sd.lambda1) < 3.0 * lam.std_error);
    Estimate g = estimate_gamma(tl, 0, burn);
    CHECK(std::abs(g.value - sd.gap_gamma) < 3.0 * g.std_error + 0.05 * sd.gap_gamma);
}

TEST_CASE("no killing means no QSD to report") {
    auto p = SubMarkovMatrix::from_rows({{0.5, 0.5}, {0.5, 0.5}});
    ChainProcess proc(p);
    FvTimeline tl = fleming_viot_run(proc, std::size_t{0}, indicators(2), opts(100, 100, 1));
    CHECK(kind_of([&] { qsd_snapshot(tl, 10.0); }) == ErrorKind::not_stationary);
}

TEST_CASE("phi ratios from probe survival") {
    SubMarkovMatrix q = builtin_chain("three_state");
    SpectralData sd = principal_eigen(q);
    ChainProcess proc(q);
    PhiEstimate phi = estimate_phi(proc, std::vector<std::size_t>{0, 1, 2}, sd.lambda1, 0.0, 20, 100000, 8);
    CHECK(phi.ratio[0] == 1.0);
    for (std::size_t s = 1; s < 3; ++s) {
        CAPTURE(s);
        CHECK(std::abs(phi.ratio[s] - sd.v[s] / sd.v[0]) < 3.0 * phi.ratio_se[s]);
    }
}

TEST_CASE("kernel phi smooths and wraps") {
    KernelPhi flat({0.1, 0.5, 0.9}, {2.0, 2.0, 2.0}, 0.1);
    CHECK(flat(0.3) == doctest::Approx(2.0));
    KernelPhi periodic({0.05, 0.5}, {1.0, 3.0}, 0.05, 1.0);
    CHECK(periodic(0.98) == doctest::Approx(1.0).epsilon(1e-3));
    CHECK_THROWS(KernelPhi({0.1}, {1.0}, 0.0));
}

TEST_CASE("Q-process sampling reproduces the Doob transform") {
    SubMarkovMatrix q = builtin_chain("three_state");
    SpectralData sd = principal_eigen(q);
    ChainProcess proc(q);
    QProcessSample s = q_process_sample(
        proc, std::size_t{0}, [&](std::size_t i) { return sd.v[i]; }, sd.lambda1, 10, 40000, 3,
        [](std::size_t i) { return i; }, 12);
    CHECK(s.mean_weight[0] == 1.0);
    CHECK(s.mean_weight_se[0] == 0.0);
    for (std::size_t k = 1; k < s.mean_weight.size(); ++k) {
        CAPTURE(k);
        CHECK(std::abs(s.mean_weight[k] - 1.0) < 3.0 * s.mean_weight_se[k]);
    }
    auto P = q_process_matrix(sd, q);
    for (std::size_t i = 0; i < 9; ++i) {
        if (P[i] == 0.0) {
            CHECK(s.transition[i] == 0.0);
            continue;
        }
        CAPTURE(i);
        CHECK(std::abs(s.transition[i] - P[i]) < 3.0 * s.transition_se[i]);
    }
    // phi far from the truth collapses the weights.
    CHECK(kind_of([&] {
              q_process_sample(
                  proc, std::size_t{0}, [](std::size_t i) { return i == 0 ? 1.0 : 1e-9; }, sd.lambda1, 40, 1000, 3,
                  [](std::size_t i) { return i; }, 1);
          }) == ErrorKind::degenerate_weights);
}
