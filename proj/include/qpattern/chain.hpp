#pragma once

#include <complex>
#include <cstddef>
#include <functional>
#include <span>
#include <string>
#include <vector>

namespace qpattern {

/// Killed Markov chain: q[i][j] is the one-step probability of moving from i
/// to j without being killed; 1 - sum_j q[i][j] is the kill probability at i.
struct SubMarkovMatrix {
    std::size_t n = 0;
    /// Row-major n x n.
    std::vector<double> q;
    double dt_per_step = 1.0;
    /// Reference measure on the states; defaults to uniform.
    std::vector<double> mu;
    /// Cell centres when the chain discretizes a 1-D diffusion.
    std::vector<double> centers;

    static SubMarkovMatrix from_rows(const std::vector<std::vector<double>>& rows, double dt = 1.0);

    double operator()(std::size_t i, std::size_t j) const { return q[i * n + j]; }
    double row_sum(std::size_t i) const;
    /// Entries >= 0, rows <= 1, positive normalized mu. InvalidArgument otherwise.
    void validate() const;
};

/// Strong connectivity of the positive-entry graph.
bool is_irreducible(const SubMarkovMatrix& q);

struct SpectralData {
    /// Per-step principal eigenvalue and lambda1 = -ln(rho) / dt.
    double rho = 0.0;
    double lambda1 = 0.0;
    /// Left eigenvector with sum 1 (this is alpha) and right eigenvector with
    /// sum_i v_i mu_i = 1 (this is phi).
    std::vector<double> u;
    std::vector<double> v;
    /// phi* = u / mu.
    std::vector<double> phi_star;
    /// M = sum_i u_i v_i = <phi, phi*>_mu.
    double M = 0.0;
    /// Modulus of the second eigenvalue and gamma = ln(rho / |rho2|) / dt.
    double rho2_modulus = 0.0;
    double gap_gamma = 0.0;
    double residual_left = 0.0;
    double residual_right = 0.0;
    std::size_t iterations = 0;
};

/// Power iteration to residual 1e-12 for (rho, u, v); the gap comes from the
/// deflated matrix Q - rho v u^T / (u.v) by a two-term recurrence fit, which
/// also handles a complex second pair. Slow convergence switches to repeated
/// squaring. Throws NotIrreducible or NoKilling.
SpectralData principal_eigen(const SubMarkovMatrix& q);

/// alpha_i = phi*_i mu_i = u_i.
std::vector<double> exact_qsd(const SpectralData& sd, std::span<const double> mu);
/// beta_i proportional to phi_i phi*_i mu_i = u_i v_i.
std::vector<double> exact_qed(const SpectralData& sd, std::span<const double> mu);

/// E_{x0}[f(Z_t) | t < tau] for t = t_steps, renormalizing every step.
double exact_conditioned_expectation(const SubMarkovMatrix& q, std::span<const double> f, std::size_t x0,
                                     std::size_t t_steps);
/// The same for every t = 0..t_steps.
std::vector<double> conditioned_expectation_curve(const SubMarkovMatrix& q, std::span<const double> f,
                                                  std::size_t x0, std::size_t t_steps);

/// E_{x0}[f(Z_{at}) g(Z_t) | t < tau] with at rounded to whole steps.
double exact_two_time(const SubMarkovMatrix& q, std::span<const double> f, std::span<const double> g,
                      double a_frac, std::size_t t_steps, std::size_t x0);
/// E_{x0}[f(Z_{at}) g(Z_{bt}) | t < tau] for 0 < a < b < 1.
double exact_two_time_window(const SubMarkovMatrix& q, std::span<const double> f, std::span<const double> g,
                             double a_frac, double b_frac, std::size_t t_steps, std::size_t x0);

/// Doob transform P_ij = q_ij v_j / (rho v_i); rows sum to one.
std::vector<double> q_process_matrix(const SpectralData& sd, const SubMarkovMatrix& q);

/// Stationary vector of a row-stochastic (or sub-stochastic, renormalized)
/// matrix by the GTH elimination, which has no subtractive cancellation.
std::vector<double> stationary_distribution(std::span<const double> p, std::size_t n);

/// Law of Z_t started at x0 under a row-stochastic matrix.
std::vector<double> marginal(std::span<const double> p, std::size_t n, std::size_t x0, std::size_t t_steps);

enum class EdgeBehavior { reflect, kill };

struct SdeChainSpec {
    std::function<double(double)> drift;
    double sigma = 1.0;
    double lo = -1.0;
    double hi = 1.0;
    std::size_t n = 100;
    double dt = 0.01;
    /// Cells whose centre satisfies this are removed (their mass is killed).
    std::function<bool(double)> kill_region;
    /// What happens to mass landing beyond [lo, hi].
    EdgeBehavior edges = EdgeBehavior::kill;
};

/// Euler-Maruyama kernel integrated over cells: from centre x the next state is
/// N(x + b(x) dt, sigma^2 dt). mu is the stationary law of the same kernel
/// with edges reflecting and nothing killed, restricted to the alive cells.
/// Throws StepTooLarge when sigma sqrt(dt) exceeds the grid span.
SubMarkovMatrix discretize_sde_to_chain(const SdeChainSpec& spec);

/// Named fixtures: symmetric2, three_state, complex4, dense5, ou_chain, double_well.
SubMarkovMatrix builtin_chain(const std::string& name);
std::vector<std::string> builtin_chain_names();

}  // namespace qpattern
