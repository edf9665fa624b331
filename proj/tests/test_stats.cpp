#include <doctest.h>

#include <cmath>
#include <vector>

#include "qpattern/rng.hpp"
#include "qpattern/stats.hpp"

using namespace qpattern;

TEST_CASE("mean and unbiased variance") {
    std::vector<double> x{1, 2, 3, 4};
    CHECK(mean(x) == doctest::Approx(2.5));
    CHECK(sample_variance(x) == doctest::Approx(5.0 / 3.0));
    std::vector<double> one{3.0};
    CHECK(sample_variance(one) == 0.0);
}

TEST_CASE("linear fit recovers an exact line") {
    std::vector<double> x{0, 1, 2, 3, 4}, y;
    for (double v : x) y.push_back(1.5 - 0.25 * v);
    LinearFit f = linear_fit(x, y);
    CHECK(f.slope == doctest::Approx(-0.25).epsilon(1e-14));
    CHECK(f.intercept == doctest::Approx(1.5).epsilon(1e-14));
    CHECK(f.r2 == doctest::Approx(1.0));
    CHECK(f.slope_stderr == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("weighted fit ignores rows with negligible weight") {
    std::vector<double> x{0, 1, 2, 3}, y{0, 1, 2, 100}, w{1, 1, 1, 1e-30};
    LinearFit f = weighted_linear_fit(x, y, w);
    CHECK(f.slope == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(f.intercept == doctest::Approx(0.0).epsilon(1e-9));
}

TEST_CASE("batch means error covers the truth for an AR(1) series") {
    // x_{t+1} = 0.9 x_t + e: the naive iid error understates the spread by ~sqrt(19).
    int covered = 0;
    const int reps = 40;
    for (int r = 0; r < reps; ++r) {
        CounterStream s(11, static_cast<std::uint64_t>(r), 0);
        std::vector<double> x(20000);
        double v = 0.0;
        for (double& xi : x) {
            v = 0.9 * v + s.normal();
            xi = v;
        }
        Estimate e = batch_means(x, 10);
        if (std::abs(e.value) < 3.0 * e.std_error) ++covered;
    }
    CHECK(covered >= 35);
}

TEST_CASE("total variation and normalization") {
    std::vector<double> p{0.5, 0.5, 0.0}, q{0.0, 0.5, 0.5};
    CHECK(total_variation(p, q) == doctest::Approx(0.5));
    CHECK(total_variation(p, p) == 0.0);
    std::vector<double> w{1, 3};
    auto n = normalized(w);
    CHECK(n[0] == doctest::Approx(0.25));
    CHECK(n[1] == doctest::Approx(0.75));
}
