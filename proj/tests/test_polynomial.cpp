#include <doctest.h>

#include <vector>

#include "qpattern/error.hpp"
#include "qpattern/polynomial.hpp"

using namespace qpattern;

TEST_CASE("parse and evaluate a two-component reaction") {
    std::vector<std::vector<Monomial>> terms{Polynomial::parse_component("-0.1 u0 + 1.1 u0^2 - u0^3 - u1", 2),
                                             Polynomial::parse_component("0.01*u0 - 0.03 u1", 2)};
    Polynomial p(2, terms);
    std::vector<double> u{0.5, 0.2}, out(2);
    p.evaluate(u, out);
    CHECK(out[0] == doctest::Approx(-0.05 + 1.1 * 0.25 - 0.125 - 0.2));
    CHECK(out[1] == doctest::Approx(0.005 - 0.006));
    CHECK(p.degree() == 3);
}

TEST_CASE("x and y alias the first two components") {
    Polynomial p(2, {Polynomial::parse_component("x y^2", 2), Polynomial::parse_component("0", 2)});
    std::vector<double> u{2.0, 3.0}, out(2);
    p.evaluate(u, out);
    CHECK(out[0] == 18.0);
    CHECK(out[1] == 0.0);
}

TEST_CASE("jacobian matches central differences") {
    Polynomial p(2, {Polynomial::parse_component("u0 - u0^3 + 2 u0 u1^2", 2),
                     Polynomial::parse_component("-u1 + 0.5 u0^2", 2)});
    std::vector<double> u{0.3, -0.7}, jac(4), fp(2), fm(2);
    p.jacobian(u, jac);
    const double h = 1e-6;
    for (std::size_t i = 0; i < 2; ++i) {
        auto up = u, um = u;
        up[i] += h;
        um[i] -= h;
        p.evaluate(up, fp);
        p.evaluate(um, fm);
        for (std::size_t c = 0; c < 2; ++c) CHECK(jac[c * 2 + i] == doctest::Approx((fp[c] - fm[c]) / (2 * h)).epsilon(1e-8));
    }
}

TEST_CASE("add_linear extends evaluation") {
    Polynomial p = Polynomial::zero(1);
    CHECK(p.is_zero());
    p.add_linear(0, -2.0);
    std::vector<double> u{1.5}, out(1);
    p.evaluate(u, out);
    CHECK(out[0] == -3.0);
    CHECK_FALSE(p.is_zero());
}

TEST_CASE("malformed expressions are parse errors") {
    for (const char* bad : {"", "u", "u3", "2 u0 ^", "u0 u0 +", "3 ? u0", "1e+ u0"}) {
        CAPTURE(bad);
        try {
            Polynomial::parse_component(bad, 2);
            FAIL("accepted");
        } catch (const Error& e) {
            CHECK(e.kind() == ErrorKind::parse_error);
        }
    }
}

TEST_CASE("to_string round-trips through the parser") {
    Polynomial p(2, {Polynomial::parse_component("-0.25 u0^2 u1 + 3", 2), Polynomial::parse_component("u1", 2)});
    std::string s = p.to_string();
    auto semi = s.find(';');
    Polynomial q(2, {Polynomial::parse_component(s.substr(0, semi), 2),
                     Polynomial::parse_component(s.substr(semi + 1), 2)});
    std::vector<double> u{0.7, -1.3}, a(2), b(2);
    p.evaluate(u, a);
    q.evaluate(u, b);
    CHECK(a == b);
}
