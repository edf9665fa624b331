#include <doctest.h>

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <vector>

#include "qpattern/chain.hpp"
#include "qpattern/error.hpp"
#include "qpattern/stats.hpp"
#include "test_support.hpp"

using namespace qpattern;

namespace {

Eigen::MatrixXd to_eigen(const SubMarkovMatrix& q) {
    Eigen::MatrixXd m(q.n, q.n);
    for (std::size_t i = 0; i < q.n; ++i)
        for (std::size_t j = 0; j < q.n; ++j) m(i, j) = q(i, j);
    return m;
}

double sum(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0); }

}  // namespace

TEST_CASE("principal eigen-data matches the frozen numpy fixtures") {
    auto blocks = qptest::read_fixture_blocks("chain_eigen.txt");
    REQUIRE(blocks.size() == builtin_chain_names().size());
    for (const auto& name : builtin_chain_names()) {
        CAPTURE(name);
        const auto& fx = blocks.at(name);
        SubMarkovMatrix q = builtin_chain(name);
        REQUIRE(q.n == static_cast<std::size_t>(fx.at("n")[0]));
        SpectralData sd = principal_eigen(q);
        CHECK(sd.rho == doctest::Approx(fx.at("rho")[0]).epsilon(1e-11));
        CHECK(sd.lambda1 == doctest::Approx(fx.at("lambda1")[0]).epsilon(1e-9));
        if (std::isfinite(fx.at("gamma")[0])) {
            CHECK(sd.gap_gamma == doctest::Approx(fx.at("gamma")[0]).epsilon(1e-6));
        }
        auto alpha = exact_qsd(sd, q.mu);
        auto beta = exact_qed(sd, q.mu);
        double da = 0.0, db = 0.0, dv = 0.0;
        double vs = sum(sd.v);
        for (std::size_t i = 0; i < q.n; ++i) {
            da = std::max(da, std::abs(alpha[i] - fx.at("alpha")[i]));
            db = std::max(db, std::abs(beta[i] - fx.at("beta")[i]));
            dv = std::max(dv, std::abs(sd.v[i] / vs - fx.at("v")[i]));
        }
        CHECK(da < 1e-10);
        CHECK(db < 1e-10);
        CHECK(dv < 1e-10);
    }
}

TEST_CASE("eigen identities against an Eigen eigensolve") {
    for (const auto& name : builtin_chain_names()) {
        CAPTURE(name);
        SubMarkovMatrix q = builtin_chain(name);
        SpectralData sd = principal_eigen(q);
        CHECK(sd.residual_left <= 1e-12);
        CHECK(sd.residual_right <= 1e-12);
        Eigen::EigenSolver<Eigen::MatrixXd> es(to_eigen(q));
        std::vector<double> mods;
        for (Eigen::Index k = 0; k < es.eigenvalues().size(); ++k) mods.push_back(std::abs(es.eigenvalues()[k]));
        std::sort(mods.rbegin(), mods.rend());
        CHECK(sd.rho == doctest::Approx(mods[0]).epsilon(1e-11));
        if (mods.size() > 1 && mods[1] > 1e-12) CHECK(sd.rho2_modulus == doctest::Approx(mods[1]).epsilon(1e-6));
        // Perron positivity.
        for (std::size_t i = 0; i < q.n; ++i) {
            CHECK(sd.u[i] > 0.0);
            CHECK(sd.v[i] > 0.0);
        }
    }
}

TEST_CASE("known closed forms") {
    SubMarkovMatrix s2 = builtin_chain("symmetric2");
    SpectralData sd = principal_eigen(s2);
    CHECK(sd.rho == doctest::Approx(0.8));
    CHECK(sd.lambda1 == doctest::Approx(-std::log(0.8)));
    auto alpha = exact_qsd(sd, s2.mu);
    CHECK(alpha[0] == doctest::Approx(0.5));
    // phi and phi* normalization gives M = <phi, phi*>_mu.
    double M = 0.0;
    for (std::size_t i = 0; i < s2.n; ++i) M += sd.v[i] * sd.phi_star[i] * s2.mu[i];
    CHECK(sd.M == doctest::Approx(M));
}

TEST_CASE("QSD stationarity and h-transform consistency") {
    for (const auto& name : builtin_chain_names()) {
        CAPTURE(name);
        SubMarkovMatrix q = builtin_chain(name);
        SpectralData sd = principal_eigen(q);
        auto alpha = exact_qsd(sd, q.mu);
        std::vector<double> next(q.n, 0.0);
        for (std::size_t i = 0; i < q.n; ++i)
            for (std::size_t j = 0; j < q.n; ++j) next[j] += alpha[i] * q(i, j);
        double mass = sum(next), l1 = 0.0;
        for (std::size_t j = 0; j < q.n; ++j) l1 += std::abs(next[j] / mass - alpha[j]);
        CHECK(l1 <= 1e-12);
        auto P = q_process_matrix(sd, q);
        for (std::size_t i = 0; i < q.n; ++i) {
            double row = 0.0;
            for (std::size_t j = 0; j < q.n; ++j) row += P[i * q.n + j];
            CHECK(row == doctest::Approx(1.0).epsilon(1e-12));
        }
        auto pi = stationary_distribution(P, q.n);
        auto beta = exact_qed(sd, q.mu);
        for (std::size_t i = 0; i < q.n; ++i) CHECK(std::abs(pi[i] - beta[i]) <= 1e-10);
        // Nested limit: the Q-process marginal tends to beta.
        if (q.n <= 5) {
            auto m = marginal(P, q.n, 0, 200);
            for (std::size_t i = 0; i < q.n; ++i) CHECK(std::abs(m[i] - beta[i]) < 1e-9);
        }
    }
}

TEST_CASE("conditioned expectation matches the frozen numpy curve and decays at rate gamma") {
    auto blocks = qptest::read_fixture_blocks("three_state_conditioned.txt");
    const auto& ref = blocks.at("").at("values");
    SubMarkovMatrix q = builtin_chain("three_state");
    SpectralData sd = principal_eigen(q);
    std::vector<double> f{1.0, 0.0, 0.0};
    auto curve = conditioned_expectation_curve(q, f, 0, ref.size() - 1);
    for (std::size_t t = 0; t < ref.size(); ++t) CHECK(curve[t] == doctest::Approx(ref[t]).epsilon(1e-12));
    CHECK(exact_conditioned_expectation(q, f, 0, 7) == doctest::Approx(curve[7]));
    double a0 = exact_qsd(sd, q.mu)[0];
    std::vector<double> t, y;
    for (std::size_t k = 5; k < 30; ++k) {
        t.push_back(static_cast<double>(k));
        y.push_back(std::log(std::abs(curve[k] - a0)));
    }
    LinearFit fit = linear_fit(t, y);
    CHECK(-fit.slope == doctest::Approx(sd.gap_gamma).epsilon(0.05));
}

TEST_CASE("two-time limits factorize") {
    SubMarkovMatrix q = builtin_chain("dense5");
    SpectralData sd = principal_eigen(q);
    auto alpha = exact_qsd(sd, q.mu);
    auto beta = exact_qed(sd, q.mu);
    std::vector<double> f{1, 0, 2, 0, 1}, g{0, 1, 0, 3, 1};
    auto dot = [](const std::vector<double>& a, const std::vector<double>& b) {
        return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
    };
    double lim1 = dot(beta, f) * dot(alpha, g);
    double lim2 = dot(beta, f) * dot(beta, g);
    CHECK(exact_two_time(q, f, g, 0.5, 400, 0) == doctest::Approx(lim1).epsilon(1e-9));
    CHECK(exact_two_time_window(q, f, g, 0.3, 0.7, 400, 0) == doctest::Approx(lim2).epsilon(1e-9));
}

TEST_CASE("SDE discretization") {
    SdeChainSpec s;
    s.drift = [](double) { return 0.0; };
    s.sigma = 1.0;
    s.lo = -1.0;
    s.hi = 1.0;
    s.n = 40;
    s.dt = 0.01;
    SubMarkovMatrix q = discretize_sde_to_chain(s);
    for (std::size_t i = 0; i < q.n; ++i)
        for (std::size_t j = 0; j < q.n; ++j) CHECK(q(i, j) == doctest::Approx(q(q.n - 1 - i, q.n - 1 - j)).epsilon(1e-12));
    SpectralData sd = principal_eigen(q);
    auto alpha = exact_qsd(sd, q.mu);
    for (std::size_t i = 0; i < q.n; ++i) CHECK(alpha[i] == doctest::Approx(alpha[q.n - 1 - i]).epsilon(1e-9));
    // Brownian motion killed outside [-1, 1]: lambda1 -> pi^2 / 8 as the grid refines.
    s.n = 200;
    s.dt = 0.001;
    CHECK(principal_eigen(discretize_sde_to_chain(s)).lambda1 == doctest::Approx(std::numbers::pi * std::numbers::pi / 8.0).epsilon(0.03));

    // Stronger confinement towards the centre raises rho monotonically.
    double last = 0.0;
    for (double k : {0.0, 1.0, 3.0, 6.0}) {
        SdeChainSpec o = s;
        o.n = 60;
        o.dt = 0.01;
        o.drift = [k](double x) { return -k * x; };
        double rho = principal_eigen(discretize_sde_to_chain(o)).rho;
        CHECK(rho > last);
        last = rho;
    }
    s.dt = 10.0;
    try {
        discretize_sde_to_chain(s);
        FAIL("accepted a huge step");
    } catch (const Error& e) {
        CHECK(e.kind() == ErrorKind::step_too_large);
    }
}

TEST_CASE("error kinds") {
    auto kind_of = [](auto&& fn) {
        try {
            fn();
        } catch (const Error& e) {
            return e.kind();
        }
        return ErrorKind::io_error;
    };
    auto reducible = SubMarkovMatrix::from_rows({{0.5, 0.0}, {0.2, 0.5}});
    CHECK_FALSE(is_irreducible(reducible));
    CHECK(kind_of([&] { principal_eigen(reducible); }) == ErrorKind::not_irreducible);
    auto stochastic = SubMarkovMatrix::from_rows({{0.5, 0.5}, {0.5, 0.5}});
    CHECK(kind_of([&] { principal_eigen(stochastic); }) == ErrorKind::no_killing);
    CHECK_THROWS(SubMarkovMatrix::from_rows({{0.7, 0.7}, {0.1, 0.1}}));
}
