#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace qpattern {

struct Monomial {
    double coeff = 0.0;
    /// Exponent of each state component; size equals the component count.
    std::vector<unsigned> powers;
};

/// Pointwise multivariate polynomial N: R^n_comp -> R^n_comp.
class Polynomial {
public:
    Polynomial() = default;
    Polynomial(std::size_t n_comp, std::vector<std::vector<Monomial>> terms);

    /// Zero polynomial on n_comp components.
    static Polynomial zero(std::size_t n_comp);
    /// Parses e.g. "-0.1 u0 + 1.1 u0^2 - u0^3 - u1" for one output component.
    /// Variable names are u0..u{n-1} (or x, y as aliases of u0, u1).
    static std::vector<Monomial> parse_component(const std::string& text, std::size_t n_comp);

    std::size_t n_comp() const noexcept { return n_comp_; }
    bool is_zero() const noexcept;
    std::size_t degree() const noexcept;
    const std::vector<std::vector<Monomial>>& terms() const noexcept { return terms_; }

    /// out[c] = N_c(u); u and out have n_comp entries.
    void evaluate(std::span<const double> u, std::span<double> out) const;
    /// Row-major n_comp x n_comp Jacobian dN_c/du_i.
    void jacobian(std::span<const double> u, std::span<double> out) const;

    /// Adds coeff * u_c to output component c.
    void add_linear(std::size_t c, double coeff);

    std::string to_string() const;

private:
    void compile();

    std::size_t n_comp_ = 0;
    std::vector<std::vector<Monomial>> terms_;
    // Flattened copy for evaluate(): per-term coefficients and indices into a
    // table of the powers u_i^0..u_i^max.
    std::vector<double> flat_coeff_;
    std::vector<unsigned> flat_power_;
    std::vector<std::size_t> comp_begin_;
    std::vector<unsigned> max_power_;
    std::vector<std::size_t> power_offset_;
};

}  // namespace qpattern
