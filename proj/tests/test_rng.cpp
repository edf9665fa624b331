#include <doctest.h>

#include <cmath>
#include <vector>

#include "qpattern/rng.hpp"

using namespace qpattern;

// Known-answer vectors published with the Random123 library.
TEST_CASE("philox4x32-10 known answers") {
    CHECK(philox4x32({0, 0, 0, 0}, {0, 0}) == PhiloxCounter{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8});
    CHECK(philox4x32({0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, {0xffffffff, 0xffffffff}) ==
          PhiloxCounter{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd});
    CHECK(philox4x32({0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, {0xa4093822, 0x299f31d0}) ==
          PhiloxCounter{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1});
}

TEST_CASE("streams are pure functions of their key") {
    CounterStream a(42, 7, 3), b(42, 7, 3);
    for (int i = 0; i < 100; ++i) CHECK(a.uniform() == b.uniform());
    CounterStream c(42, 7, 4), d(42, 8, 3), e(43, 7, 3), f(42, 7, 3, StreamPurpose::resample);
    CounterStream ref(42, 7, 3);
    double r = ref.uniform();
    CHECK(c.uniform() != r);
    CHECK(d.uniform() != r);
    CHECK(e.uniform() != r);
    CHECK(f.uniform() != r);
}

TEST_CASE("uniform stays in the open unit interval with the right moments") {
    CounterStream s(1, 0, 0);
    const int n = 200000;
    double sum = 0.0, sum2 = 0.0;
    for (int i = 0; i < n; ++i) {
        double u = s.uniform();
        REQUIRE(u > 0.0);
        REQUIRE(u < 1.0);
        sum += u;
        sum2 += u * u;
    }
    double m = sum / n, v = sum2 / n - m * m;
    CHECK(std::abs(m - 0.5) < 4.0 * std::sqrt(1.0 / 12.0 / n));
    CHECK(std::abs(v - 1.0 / 12.0) < 1e-3);
}

TEST_CASE("normal draws have unit variance and no skew") {
    CounterStream s(2, 0, 0);
    const int n = 200000;
    double s1 = 0.0, s2 = 0.0, s3 = 0.0;
    for (int i = 0; i < n; ++i) {
        double z = s.normal();
        s1 += z;
        s2 += z * z;
        s3 += z * z * z;
    }
    CHECK(std::abs(s1 / n) < 4.0 / std::sqrt(n));
    CHECK(std::abs(s2 / n - 1.0) < 4.0 * std::sqrt(2.0 / n));
    CHECK(std::abs(s3 / n) < 4.0 * std::sqrt(15.0 / n));
}

TEST_CASE("below(n) is uniform on [0, n)") {
    CounterStream s(3, 0, 0);
    const std::uint64_t k = 7;
    const int n = 70000;
    std::vector<int> counts(k, 0);
    for (int i = 0; i < n; ++i) {
        auto b = s.below(k);
        REQUIRE(b < k);
        ++counts[b];
    }
    double chi2 = 0.0, expect = static_cast<double>(n) / k;
    for (int c : counts) chi2 += (c - expect) * (c - expect) / expect;
    // 6 degrees of freedom; 0.1% upper quantile is 22.46.
    CHECK(chi2 < 22.46);
    CounterStream one(3, 1, 0);
    CHECK(one.below(1) == 0);
}
