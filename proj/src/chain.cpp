#include "qpattern/chain.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "qpattern/error.hpp"

namespace qpattern {

namespace {

using Vec = std::vector<double>;

void mat_vec(const Vec& q, std::size_t n, const Vec& x, Vec& y) {
    for (std::size_t i = 0; i < n; ++i) {
        // Four partial sums break the serial add dependency; the order is
        // fixed, so results do not depend on anything but n.
        const double* row = q.data() + i * n;
        double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
        std::size_t j = 0;
        for (; j + 4 <= n; j += 4) {
            s0 += row[j] * x[j];
            s1 += row[j + 1] * x[j + 1];
            s2 += row[j + 2] * x[j + 2];
            s3 += row[j + 3] * x[j + 3];
        }
        for (; j < n; ++j) s0 += row[j] * x[j];
        y[i] = (s0 + s1) + (s2 + s3);
    }
}

void vec_mat(const Vec& q, std::size_t n, const Vec& x, Vec& y) {
    std::fill(y.begin(), y.end(), 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = q.data() + i * n;
        double xi = x[i];
        if (xi == 0.0) continue;
        for (std::size_t j = 0; j < n; ++j) y[j] += xi * row[j];
    }
}

Vec mat_mul(const Vec& a, const Vec& b, std::size_t n) {
    Vec c(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t k = 0; k < n; ++k) {
            double aik = a[i * n + k];
            if (aik == 0.0) continue;
            const double* brow = b.data() + k * n;
            double* crow = c.data() + i * n;
            for (std::size_t j = 0; j < n; ++j) crow[j] += aik * brow[j];
        }
    }
    return c;
}

double sum(const Vec& x) { return std::accumulate(x.begin(), x.end(), 0.0); }

double max_abs(const Vec& x) {
    double m = 0.0;
    for (double v : x) m = std::max(m, std::abs(v));
    return m;
}

void scale(Vec& x, double s) {
    for (double& v : x) v *= s;
}

// Power iteration x <- A x / |A x| (right) or x <- x A (left), with A given by
// a callback. Returns the iteration count; converged flags residual <= tol.
template <class Apply>
std::size_t power_iterate(Apply&& apply, Vec& x, std::size_t max_iter, double tol, bool& converged) {
    const std::size_t n = x.size();
    Vec y(n);
    converged = false;
    std::size_t it = 0;
    for (; it < max_iter; ++it) {
        apply(x, y);
        double norm = sum(y);
        if (!(norm > 0.0)) break;
        scale(y, 1.0 / norm);
        double diff = 0.0;
        for (std::size_t i = 0; i < n; ++i) diff = std::max(diff, std::abs(y[i] - x[i]));
        x.swap(y);
        if (diff <= tol) {
            converged = true;
            ++it;
            break;
        }
    }
    return it;
}

// Repeated squaring of (Q + shift I) normalized by its max entry; 2^levels steps.
Vec accelerated_power(const SubMarkovMatrix& q, double shift, int levels) {
    const std::size_t n = q.n;
    Vec p = q.q;
    for (std::size_t i = 0; i < n; ++i) p[i * n + i] += shift;
    for (int l = 0; l < levels; ++l) {
        p = mat_mul(p, p, n);
        double m = max_abs(p);
        scale(p, 1.0 / m);
    }
    return p;
}

struct Eigen1 {
    double rho = 0.0;
    Vec u, v;
    double res_l = 0.0, res_r = 0.0;
    std::size_t iterations = 0;
};

void residuals(const SubMarkovMatrix& q, Eigen1& e) {
    const std::size_t n = q.n;
    Vec qv(n), uq(n);
    mat_vec(q.q, n, e.v, qv);
    vec_mat(q.q, n, e.u, uq);
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        num += e.u[i] * qv[i];
        den += e.u[i] * e.v[i];
    }
    e.rho = num / den;
    e.res_l = 0.0;
    e.res_r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        e.res_l = std::max(e.res_l, std::abs(uq[i] - e.rho * e.u[i]));
        e.res_r = std::max(e.res_r, std::abs(qv[i] - e.rho * e.v[i]));
    }
}

Eigen1 perron(const SubMarkovMatrix& q) {
    const std::size_t n = q.n;
    const double tol = 1e-12;
    Eigen1 e;
    e.u.assign(n, 1.0 / static_cast<double>(n));
    e.v.assign(n, 1.0 / static_cast<double>(n));
    bool ok_r = false, ok_l = false;
    // Plain iteration first; the shifted matrix Q + I removes any peripheral
    // eigenvalues of equal modulus (periodic structure).
    for (double shift : {0.0, 1.0}) {
        auto right = [&](const Vec& x, Vec& y) {
            mat_vec(q.q, n, x, y);
            for (std::size_t i = 0; i < n; ++i) y[i] += shift * x[i];
        };
        auto left = [&](const Vec& x, Vec& y) {
            vec_mat(q.q, n, x, y);
            for (std::size_t i = 0; i < n; ++i) y[i] += shift * x[i];
        };
        e.iterations += power_iterate(right, e.v, 5000, 1e-15, ok_r);
        e.iterations += power_iterate(left, e.u, 5000, 1e-15, ok_l);
        residuals(q, e);
        if (e.res_l <= tol && e.res_r <= tol) return e;
        if (n <= 1000) {
            // Slow mixing: 2^12 steps at a time.
            Vec p = accelerated_power(q, shift, 12);
            auto right_p = [&](const Vec& x, Vec& y) { mat_vec(p, n, x, y); };
            auto left_p = [&](const Vec& x, Vec& y) { vec_mat(p, n, x, y); };
            e.iterations += power_iterate(right_p, e.v, 2000, 1e-16, ok_r);
            e.iterations += power_iterate(left_p, e.u, 2000, 1e-16, ok_l);
            // A few plain steps polish against the original matrix.
            e.iterations += power_iterate(right, e.v, 50, 1e-16, ok_r);
            e.iterations += power_iterate(left, e.u, 50, 1e-16, ok_l);
            residuals(q, e);
            if (e.res_l <= tol && e.res_r <= tol) return e;
        }
    }
    fail(ErrorKind::not_converged, "principal eigenvector did not reach residual 1e-12");
}

// Largest-modulus eigenvalue of the deflated matrix from a vector iteration.
double second_modulus(const SubMarkovMatrix& q, const Eigen1& e) {
    const std::size_t n = q.n;
    if (n == 1) return 0.0;
    double uv = 0.0;
    for (std::size_t i = 0; i < n; ++i) uv += e.u[i] * e.v[i];
    auto deflate = [&](Vec& y) {
        double c = 0.0;
        for (std::size_t i = 0; i < n; ++i) c += e.u[i] * y[i];
        c /= uv;
        for (std::size_t i = 0; i < n; ++i) y[i] -= c * e.v[i];
    };
    auto apply = [&](const Vec& x, Vec& y) {
        mat_vec(q.q, n, x, y);
        deflate(y);
    };
    // Deterministic start with components along every direction.
    Vec x(n);
    for (std::size_t i = 0; i < n; ++i) x[i] = 1.0 + 0.5 * std::sin(1.7 * static_cast<double>(i) + 0.3);
    deflate(x);
    Vec y1(n), y2(n);
    double estimate = -1.0;
    int stable = 0;
    for (std::size_t it = 0; it < 20000; ++it) {
        double nx = max_abs(x);
        if (nx == 0.0) return 0.0;
        scale(x, 1.0 / nx);
        apply(x, y1);
        apply(y1, y2);
        // Fit y2 = a y1 + b x; eigenvalues solve z^2 = a z + b.
        double xx = 0, xy = 0, yy = 0, xz = 0, yz = 0;
        for (std::size_t i = 0; i < n; ++i) {
            xx += x[i] * x[i];
            xy += x[i] * y1[i];
            yy += y1[i] * y1[i];
            xz += x[i] * y2[i];
            yz += y1[i] * y2[i];
        }
        double modulus;
        if (yy == 0.0) {
            return 0.0;
        }
        // One-term fit first: a strictly dominant real eigenvalue makes x and
        // y1 colinear, where the two-term system is ill-conditioned.
        double c = xy / xx;
        double r1 = std::max(0.0, yy - 2.0 * c * xy + c * c * xx);
        double det = xx * yy - xy * xy;
        if (r1 <= 1e-12 * yy || det <= 1e-14 * xx * yy) {
            modulus = std::abs(c);
        } else {
            double a = (yz * xx - xz * xy) / det;
            double b = (xz * yy - yz * xy) / det;
            double disc = a * a + 4.0 * b;
            if (disc >= 0.0) {
                double r1p = 0.5 * (a + std::sqrt(disc));
                double r2p = 0.5 * (a - std::sqrt(disc));
                modulus = std::max(std::abs(r1p), std::abs(r2p));
            } else {
                modulus = std::sqrt(-b);
            }
        }
        if (estimate >= 0.0 && std::abs(modulus - estimate) <= 1e-13 * std::max(modulus, 1e-300)) {
            if (++stable >= 3) return modulus;
        } else {
            stable = 0;
        }
        estimate = modulus;
        x = y1;
    }
    return estimate;
}

}  // namespace

SubMarkovMatrix SubMarkovMatrix::from_rows(const std::vector<std::vector<double>>& rows, double dt) {
    SubMarkovMatrix m;
    m.n = rows.size();
    m.dt_per_step = dt;
    m.q.reserve(m.n * m.n);
    for (const auto& r : rows) {
        require(r.size() == m.n, "chain: matrix must be square");
        m.q.insert(m.q.end(), r.begin(), r.end());
    }
    m.mu.assign(m.n, 1.0 / static_cast<double>(m.n));
    m.validate();
    return m;
}

double SubMarkovMatrix::row_sum(std::size_t i) const {
    return std::accumulate(q.begin() + static_cast<long>(i * n), q.begin() + static_cast<long>((i + 1) * n), 0.0);
}

void SubMarkovMatrix::validate() const {
    require(n >= 1, "chain: empty matrix");
    require(q.size() == n * n, "chain: entry count must be n^2");
    require(dt_per_step > 0.0, "chain: dt_per_step must be positive");
    for (double v : q) require(v >= 0.0 && std::isfinite(v), "chain: entries must be finite and >= 0");
    for (std::size_t i = 0; i < n; ++i) {
        require(row_sum(i) <= 1.0 + 1e-12, "chain: row sums must not exceed 1");
    }
    require(mu.size() == n, "chain: mu must have n entries");
    double s = 0.0;
    for (double v : mu) {
        require(v > 0.0, "chain: mu entries must be positive");
        s += v;
    }
    require(std::abs(s - 1.0) <= 1e-9, "chain: mu must sum to 1");
}

bool is_irreducible(const SubMarkovMatrix& q) {
    const std::size_t n = q.n;
    auto reach_all = [&](bool transpose) {
        std::vector<char> seen(n, 0);
        std::vector<std::size_t> stack{0};
        seen[0] = 1;
        std::size_t count = 1;
        while (!stack.empty()) {
            std::size_t i = stack.back();
            stack.pop_back();
            for (std::size_t j = 0; j < n; ++j) {
                double w = transpose ? q(j, i) : q(i, j);
                if (w > 0.0 && !seen[j]) {
                    seen[j] = 1;
                    ++count;
                    stack.push_back(j);
                }
            }
        }
        return count == n;
    };
    return reach_all(false) && reach_all(true);
}

SpectralData principal_eigen(const SubMarkovMatrix& q) {
    q.validate();
    if (!is_irreducible(q)) {
        fail(ErrorKind::not_irreducible, "chain: transition graph is not strongly connected");
    }
    Eigen1 e = perron(q);
    if (e.rho >= 1.0 - 1e-14) {
        fail(ErrorKind::no_killing, "chain: principal eigenvalue is 1, nothing is killed");
    }
    SpectralData sd;
    sd.iterations = e.iterations;
    double su = sum(e.u);
    scale(e.u, 1.0 / su);
    double sv = 0.0;
    for (std::size_t i = 0; i < q.n; ++i) sv += e.v[i] * q.mu[i];
    scale(e.v, 1.0 / sv);
    for (std::size_t i = 0; i < q.n; ++i) {
        require(e.u[i] > 0.0 && e.v[i] > 0.0, "chain: Perron vectors must be positive");
    }
    residuals(q, e);
    sd.rho = e.rho;
    sd.lambda1 = -std::log(e.rho) / q.dt_per_step;
    sd.u = e.u;
    sd.v = e.v;
    sd.residual_left = e.res_l;
    sd.residual_right = e.res_r;
    sd.phi_star.resize(q.n);
    for (std::size_t i = 0; i < q.n; ++i) {
        sd.phi_star[i] = e.u[i] / q.mu[i];
        sd.M += e.u[i] * e.v[i];
    }
    sd.rho2_modulus = second_modulus(q, e);
    sd.gap_gamma = sd.rho2_modulus > 0.0 ? std::log(sd.rho / sd.rho2_modulus) / q.dt_per_step
                                         : std::numeric_limits<double>::infinity();
    return sd;
}

std::vector<double> exact_qsd(const SpectralData& sd, std::span<const double> mu) {
    std::vector<double> alpha(sd.u.size());
    for (std::size_t i = 0; i < alpha.size(); ++i) alpha[i] = sd.phi_star[i] * mu[i];
    double s = sum(alpha);
    scale(alpha, 1.0 / s);
    return alpha;
}

std::vector<double> exact_qed(const SpectralData& sd, std::span<const double> mu) {
    std::vector<double> beta(sd.u.size());
    for (std::size_t i = 0; i < beta.size(); ++i) beta[i] = sd.v[i] * sd.phi_star[i] * mu[i];
    double s = sum(beta);
    scale(beta, 1.0 / s);
    return beta;
}

namespace {

// Applies Q^steps to h in place with per-step rescaling; returns the log scale.
double propagate(const SubMarkovMatrix& q, Vec& h, std::size_t steps) {
    Vec tmp(q.n);
    double log_scale = 0.0;
    for (std::size_t t = 0; t < steps; ++t) {
        mat_vec(q.q, q.n, h, tmp);
        double m = max_abs(tmp);
        if (m == 0.0) {
            h = tmp;
            return log_scale;
        }
        scale(tmp, 1.0 / m);
        log_scale += std::log(m);
        h.swap(tmp);
    }
    return log_scale;
}

}  // namespace

std::vector<double> conditioned_expectation_curve(const SubMarkovMatrix& q, std::span<const double> f,
                                                  std::size_t x0, std::size_t t_steps) {
    require(f.size() == q.n && x0 < q.n, "conditioned expectation: size mismatch");
    // Forward law of the killed chain, renormalized each step.
    Vec p(q.n, 0.0), tmp(q.n);
    p[x0] = 1.0;
    std::vector<double> out;
    out.reserve(t_steps + 1);
    for (std::size_t t = 0;; ++t) {
        double e = 0.0;
        for (std::size_t i = 0; i < q.n; ++i) e += p[i] * f[i];
        out.push_back(e);
        if (t == t_steps) break;
        vec_mat(q.q, q.n, p, tmp);
        double s = sum(tmp);
        require(s > 0.0, "conditioned expectation: chain killed with certainty");
        scale(tmp, 1.0 / s);
        p.swap(tmp);
    }
    return out;
}

double exact_conditioned_expectation(const SubMarkovMatrix& q, std::span<const double> f, std::size_t x0,
                                     std::size_t t_steps) {
    return conditioned_expectation_curve(q, f, x0, t_steps).back();
}

double exact_two_time_window(const SubMarkovMatrix& q, std::span<const double> f, std::span<const double> g,
                             double a_frac, double b_frac, std::size_t t_steps, std::size_t x0) {
    require(f.size() == q.n && g.size() == q.n && x0 < q.n, "two-time: size mismatch");
    require(0.0 < a_frac && a_frac < b_frac && b_frac <= 1.0, "two-time: need 0 < a < b <= 1");
    auto sa = static_cast<std::size_t>(std::llround(a_frac * static_cast<double>(t_steps)));
    auto sb = static_cast<std::size_t>(std::llround(b_frac * static_cast<double>(t_steps)));
    sb = std::max(sb, sa);
    // Numerator: Q^{sa} (f . Q^{sb - sa} (g . Q^{t - sb} 1)).
    Vec h(q.n, 1.0);
    double ls = propagate(q, h, t_steps - sb);
    for (std::size_t i = 0; i < q.n; ++i) h[i] *= g[i];
    ls += propagate(q, h, sb - sa);
    for (std::size_t i = 0; i < q.n; ++i) h[i] *= f[i];
    ls += propagate(q, h, sa);
    Vec one(q.n, 1.0);
    double ld = propagate(q, one, t_steps);
    require(one[x0] > 0.0, "two-time: survival probability underflowed");
    return h[x0] / one[x0] * std::exp(ls - ld);
}

double exact_two_time(const SubMarkovMatrix& q, std::span<const double> f, std::span<const double> g,
                      double a_frac, std::size_t t_steps, std::size_t x0) {
    require(0.0 < a_frac && a_frac < 1.0, "two-time: need 0 < a < 1");
    return exact_two_time_window(q, f, g, a_frac, 1.0, t_steps, x0);
}

std::vector<double> q_process_matrix(const SpectralData& sd, const SubMarkovMatrix& q) {
    const std::size_t n = q.n;
    std::vector<double> p(n * n);
    for (std::size_t i = 0; i < n; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) {
            p[i * n + j] = q(i, j) * sd.v[j] / (sd.rho * sd.v[i]);
            row += p[i * n + j];
        }
        // Remove the O(1e-16) drift so rows are stochastic to the last bit.
        for (std::size_t j = 0; j < n; ++j) p[i * n + j] /= row;
    }
    return p;
}

std::vector<double> stationary_distribution(std::span<const double> p_in, std::size_t n) {
    require(p_in.size() == n * n, "stationary: entry count must be n^2");
    Vec p(p_in.begin(), p_in.end());
    for (std::size_t k = n; k-- > 1;) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += p[k * n + j];
        require(s > 0.0, "stationary: chain is reducible");
        for (std::size_t i = 0; i < k; ++i) {
            double pik = p[i * n + k];
            if (pik == 0.0) continue;
            for (std::size_t j = 0; j < k; ++j) p[i * n + j] += pik * p[k * n + j] / s;
        }
    }
    Vec pi(n, 0.0);
    pi[0] = 1.0;
    for (std::size_t k = 1; k < n; ++k) {
        double s = 0.0;
        for (std::size_t j = 0; j < k; ++j) s += p[k * n + j];
        double num = 0.0;
        for (std::size_t i = 0; i < k; ++i) num += pi[i] * p[i * n + k];
        pi[k] = num / s;
    }
    double total = sum(pi);
    scale(pi, 1.0 / total);
    return pi;
}

std::vector<double> marginal(std::span<const double> p, std::size_t n, std::size_t x0, std::size_t t_steps) {
    Vec x(n, 0.0), y(n);
    x[x0] = 1.0;
    Vec pm(p.begin(), p.end());
    for (std::size_t t = 0; t < t_steps; ++t) {
        vec_mat(pm, n, x, y);
        x.swap(y);
    }
    return x;
}

SubMarkovMatrix discretize_sde_to_chain(const SdeChainSpec& spec) {
    require(static_cast<bool>(spec.drift), "sde chain: drift required");
    require(spec.n >= 2 && spec.hi > spec.lo, "sde chain: need n >= 2 and hi > lo");
    require(spec.sigma > 0.0 && spec.dt > 0.0, "sde chain: sigma and dt must be positive");
    const double span = spec.hi - spec.lo;
    const double sd = spec.sigma * std::sqrt(spec.dt);
    if (sd > span) {
        fail(ErrorKind::step_too_large, "sde chain: Gaussian step wider than the grid span");
    }
    const std::size_t n = spec.n;
    const double h = span / static_cast<double>(n);
    Vec centers(n);
    for (std::size_t i = 0; i < n; ++i) centers[i] = spec.lo + (static_cast<double>(i) + 0.5) * h;
    // Full kernel with reflecting edges (for mu) and the kill-edge variant.
    Vec full(n * n, 0.0), edge_killed(n * n, 0.0);
    // Mass of N(0,1) on [a, b], taken from whichever tail keeps precision.
    auto mass = [](double a, double b) {
        const double r = 1.0 / std::sqrt(2.0);
        if (a > 0.0) return 0.5 * (std::erfc(a * r) - std::erfc(b * r));
        return 0.5 * (std::erfc(-b * r) - std::erfc(-a * r));
    };
    for (std::size_t i = 0; i < n; ++i) {
        double m = centers[i] + spec.drift(centers[i]) * spec.dt;
        for (std::size_t j = 0; j < n; ++j) {
            double a = (spec.lo + static_cast<double>(j) * h - m) / sd;
            double b = (spec.lo + static_cast<double>(j + 1) * h - m) / sd;
            double cell = std::max(mass(a, b), 0.0);
            full[i * n + j] = cell;
            edge_killed[i * n + j] = cell;
        }
        full[i * n] += 0.5 * std::erfc((m - spec.lo) / sd / std::sqrt(2.0));
        full[i * n + n - 1] += 0.5 * std::erfc((spec.hi - m) / sd / std::sqrt(2.0));
    }
    std::vector<std::size_t> alive;
    for (std::size_t i = 0; i < n; ++i) {
        if (!spec.kill_region || !spec.kill_region(centers[i])) alive.push_back(i);
    }
    require(!alive.empty(), "sde chain: every cell is in the kill region");
    Vec stationary = stationary_distribution(full, n);
    const Vec& kernel = spec.edges == EdgeBehavior::reflect ? full : edge_killed;
    SubMarkovMatrix out;
    out.n = alive.size();
    out.dt_per_step = spec.dt;
    out.q.resize(out.n * out.n);
    out.mu.resize(out.n);
    out.centers.resize(out.n);
    double mu_total = 0.0;
    for (std::size_t a = 0; a < out.n; ++a) {
        out.centers[a] = centers[alive[a]];
        out.mu[a] = stationary[alive[a]];
        mu_total += out.mu[a];
        for (std::size_t b = 0; b < out.n; ++b) out.q[a * out.n + b] = kernel[alive[a] * n + alive[b]];
    }
    scale(out.mu, 1.0 / mu_total);
    for (double& m : out.mu) m = std::max(m, 1e-300);
    out.validate();
    return out;
}

std::vector<std::string> builtin_chain_names() {
    return {"symmetric2", "three_state", "complex4", "dense5", "ou_chain", "double_well"};
}

SubMarkovMatrix builtin_chain(const std::string& name) {
    if (name == "symmetric2") {
        return SubMarkovMatrix::from_rows({{0.4, 0.4}, {0.4, 0.4}});
    }
    if (name == "three_state") {
        return SubMarkovMatrix::from_rows({{0.5, 0.3, 0.0}, {0.2, 0.5, 0.2}, {0.0, 0.3, 0.4}});
    }
    if (name == "complex4") {
        // Near-circulant: the second eigenvalue pair is complex.
        return SubMarkovMatrix::from_rows({{0.30, 0.55, 0.05, 0.02},
                                           {0.00, 0.30, 0.55, 0.05},
                                           {0.05, 0.00, 0.30, 0.55},
                                           {0.55, 0.05, 0.00, 0.30}});
    }
    if (name == "dense5") {
        return SubMarkovMatrix::from_rows({{0.30, 0.20, 0.10, 0.15, 0.05},
                                           {0.10, 0.25, 0.25, 0.10, 0.20},
                                           {0.05, 0.15, 0.40, 0.20, 0.10},
                                           {0.20, 0.10, 0.10, 0.30, 0.15},
                                           {0.15, 0.05, 0.20, 0.10, 0.35}});
    }
    if (name == "ou_chain") {
        SdeChainSpec s;
        s.drift = [](double x) { return -x; };
        s.sigma = 1.0;
        s.lo = -1.0;
        s.hi = 1.0;
        s.n = 100;
        s.dt = 0.01;
        s.edges = EdgeBehavior::kill;
        return discretize_sde_to_chain(s);
    }
    if (name == "double_well") {
        SdeChainSpec s;
        s.drift = [](double x) { return x - x * x * x; };
        s.sigma = 0.7;
        s.lo = -1.5;
        s.hi = 1.5;
        s.n = 400;
        s.dt = 0.01;
        s.edges = EdgeBehavior::kill;
        return discretize_sde_to_chain(s);
    }
    fail(ErrorKind::invalid_argument, "unknown builtin chain '" + name + "'");
}

}  // namespace qpattern
