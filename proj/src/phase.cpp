#include "qpattern/phase.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "qpattern/error.hpp"
#include "qpattern/parallel.hpp"
#include "qpattern/stats.hpp"

namespace qpattern {

namespace {

double manifold_scale(const PatternManifold& m) {
    double s = 0.0;
    if (m.kind == ManifoldKind::wave_translates) {
        for (double v : m.reference) s = std::max(s, std::abs(v));
    } else {
        for (const auto& row : m.table)
            for (double v : row) s = std::max(s, std::abs(v));
    }
    return s > 0.0 ? s : 1.0;
}

double positive_mod(double x, double p) {
    double r = std::fmod(x, p);
    if (r < 0.0) r += p;
    if (r >= p) r = 0.0;
    return r;
}

}  // namespace

IsochronMap::IsochronMap(const PatternManifold& manifold, const Dynamics& dyn, double relax_time,
                         const IsochronOptions& opts)
    : manifold_(&manifold), dyn_(&dyn), relax_time_(relax_time), opts_(opts) {
    manifold.validate();
    require(manifold.dim == dyn.dimension(), "isochron: manifold and dynamics dimensions differ");
    require(relax_time_ >= 0.0, "isochron: relax time must be >= 0");
    require(opts_.fd_step > 0.0, "isochron: finite-difference step must be positive");
    require(manifold.phase_velocity != 0.0, "isochron: manifold has zero phase velocity");
    scale_ = manifold_scale(manifold);
    match_tube_.delta = std::numeric_limits<double>::infinity();
    match_tube_.manifold = manifold;
    match_tube_.norm = DistanceNorm::l2;
    n_dir_ = opts_.n_directions == 0 ? dyn.noise_rank() : std::min(opts_.n_directions, dyn.noise_rank());
}

double IsochronMap::wrap_diff(double d) const {
    const double p = period();
    return d - p * std::round(d / p);
}

double IsochronMap::match(std::span<const double> y) const {
    const PatternManifold& m = *manifold_;
    const FourierCurve& curve = m.curve();
    const std::size_t d = m.dim;
    const double p = period();
    const double w = m.l2_weight();

    double theta = tube_distance(y, match_tube_).phase;

    std::vector<double> g(d), g1(d), g2(d);
    const double max_step = p / static_cast<double>(4 * std::max<std::size_t>(curve.harmonics(), 1));
    for (int it = 0; it < 50; ++it) {
        curve.evaluate(theta, g, g1, g2);
        double f = 0.0, fp = 0.0;
        for (std::size_t i = 0; i < d; ++i) {
            double r = y[i] - g[i];
            f += r * g1[i];
            fp += -g1[i] * g1[i] + r * g2[i];
        }
        if (!(fp < 0.0)) fp = -std::abs(fp) - 1e-300;
        double step = std::clamp(-f / fp, -max_step, max_step);
        theta += step;
        if (std::abs(step) <= 1e-14 * p) break;
    }
    curve.evaluate(theta, g, {}, {});
    double dist2 = 0.0, norm2 = 0.0;
    for (std::size_t i = 0; i < d; ++i) {
        dist2 += (y[i] - g[i]) * (y[i] - g[i]);
        norm2 += g[i] * g[i];
    }
    double dist = std::sqrt(w * dist2);
    double ref = std::max(std::sqrt(w * norm2), scale_ * std::sqrt(w));
    if (!(dist <= opts_.match_tol * ref)) {
        fail(ErrorKind::not_converged, "isochron: relaxed state is " + std::to_string(dist) +
                                           " from the manifold (limit " + std::to_string(opts_.match_tol * ref) +
                                           "); start is outside the basin or the relax horizon is too short");
    }
    return positive_mod(theta, p);
}

double IsochronMap::phase_of(std::span<const double> x) const {
    require(x.size() == manifold_->dim, "isochron: state has the wrong dimension");
    thread_local std::vector<double> y;
    y.assign(x.begin(), x.end());
    dyn_->evolve(y, relax_time_);
    double theta = match(y);
    return positive_mod(theta - relax_time_ * phase_velocity(), period());
}

IsochronMap::Local IsochronMap::local(std::span<const double> x) const {
    const std::size_t d = manifold_->dim;
    Local out;
    std::vector<double> probe(d), dir(d);
    auto eval = [&](double h) {
        for (std::size_t i = 0; i < d; ++i) probe[i] = x[i] + h * dir[i];
        try {
            return phase_of(probe);
        } catch (const Error& e) {
            if (e.kind() == ErrorKind::not_converged || e.kind() == ErrorKind::non_finite) {
                fail(ErrorKind::stencil_overflow, std::string("isochron stencil left the basin: ") + e.what());
            }
            throw;
        }
    };
    out.phase = phase_of(x);
    // Returns (first, second) directional derivatives along dir.
    auto derivatives = [&]() -> std::pair<double, double> {
        double sup = 0.0;
        for (double v : dir) sup = std::max(sup, std::abs(v));
        if (sup == 0.0) return {0.0, 0.0};
        double h = opts_.fd_step * scale_ / sup;
        double up = wrap_diff(eval(h) - out.phase);
        double down = wrap_diff(eval(-h) - out.phase);
        return {(up - down) / (2.0 * h), (up + down) / (h * h)};
    };
    dyn_->drift(x, dir);
    out.drift_term = derivatives().first;
    out.noise_gradient.resize(n_dir_);
    double second = 0.0;
    for (std::size_t k = 0; k < n_dir_; ++k) {
        dyn_->noise_direction(k, dir);
        auto [first, sec] = derivatives();
        out.noise_gradient[k] = first;
        second += sec;
    }
    out.ito_term = 0.5 * second;
    return out;
}

double IsochronMap::drift_integrand(std::span<const double> x) const {
    Local l = local(x);
    double s = dyn_->sigma();
    return l.drift_term + s * s * l.ito_term;
}

double IsochronMap::equivariance_error(std::span<const double> x, double s) const {
    std::vector<double> y(x.begin(), x.end());
    dyn_->evolve(y, s);
    return std::abs(wrap_diff(phase_of(y) - phase_of(x) - s * phase_velocity()));
}

IsochronMap build_isochron(const PatternManifold& manifold, const Dynamics& dyn, const IsochronOptions& opts) {
    require(opts.n_probes >= 1, "isochron: need at least one probe");
    require(opts.cauchy_tol > 0.0, "isochron: tolerance must be positive");
    double relax = opts.relax_time > 0.0 ? opts.relax_time : 5.0 * dyn.contraction_time();
    IsochronMap iso(manifold, dyn, relax, opts);
    const double p = iso.period();
    const std::size_t d = manifold.dim;

    std::vector<std::vector<double>> probes(opts.n_probes, std::vector<double>(d));
    std::vector<double> dir(d);
    for (std::size_t j = 0; j < opts.n_probes; ++j) {
        double theta = (static_cast<double>(j) + 0.5) * p / static_cast<double>(opts.n_probes);
        manifold.curve().evaluate(theta, probes[j], {}, {});
        if (dyn.noise_rank() == 0) continue;
        dyn.noise_direction(j % dyn.noise_rank(), dir);
        double sup = 0.0;
        for (double v : dir) sup = std::max(sup, std::abs(v));
        if (sup == 0.0) continue;
        double sign = (j / dyn.noise_rank()) % 2 == 0 ? 1.0 : -1.0;
        double a = sign * opts.probe_radius * iso.scale() / sup;
        for (std::size_t i = 0; i < d; ++i) probes[j][i] += a * dir[i];
    }

    std::vector<double> phase_r(opts.n_probes), phase_2r(opts.n_probes);
    bool settled = false;
    for (std::size_t doubling = 0; doubling <= opts.max_doublings; ++doubling) {
        IsochronMap longer(manifold, dyn, 2.0 * iso.relax_time_, opts);
        parallel_for(opts.n_probes, opts.workers, [&](std::size_t j) {
            phase_r[j] = iso.phase_of(probes[j]);
            phase_2r[j] = longer.phase_of(probes[j]);
        });
        double change = 0.0;
        for (std::size_t j = 0; j < opts.n_probes; ++j) {
            change = std::max(change, std::abs(iso.wrap_diff(phase_r[j] - phase_2r[j])));
        }
        if (change < opts.cauchy_tol * p) {
            settled = true;
            break;
        }
        iso.relax_time_ *= 2.0;
    }
    if (!settled) {
        fail(ErrorKind::not_converged, "isochron: phases still move after " + std::to_string(opts.max_doublings) +
                                           " doublings of the relax horizon");
    }

    const double t_cycle = p / std::abs(iso.phase_velocity());
    const double shifts[] = {0.37 * t_cycle, 2.0 * t_cycle};
    std::vector<double> err(opts.n_probes, 0.0);
    parallel_for(opts.n_probes, opts.workers, [&](std::size_t j) {
        for (double s : shifts) err[j] = std::max(err[j], iso.equivariance_error(probes[j], s));
    });
    iso.build_equivariance_ = *std::max_element(err.begin(), err.end());
    if (iso.build_equivariance_ > 10.0 * opts.cauchy_tol * p) {
        fail(ErrorKind::not_converged,
             "isochron: equivariance error " + std::to_string(iso.build_equivariance_) + " exceeds tolerance");
    }
    return iso;
}

PhaseSeries phase_series(const KilledPath& path, const IsochronMap& iso) {
    PhaseSeries out;
    std::size_t n = 0;
    while (n < path.times.size() && path.times[n] < path.tau) ++n;
    out.survived_to = std::isfinite(path.tau) ? path.tau : (path.times.empty() ? 0.0 : path.times.back());
    std::vector<double> wrapped(n);
    for (std::size_t i = 0; i < n; ++i) {
        try {
            wrapped[i] = iso.phase_of(path.snapshots[i]);
        } catch (const Error& e) {
            fail(e.kind(), "phase_series: snapshot " + std::to_string(i) + ": " + e.what());
        }
    }
    const double p = iso.period();
    for (std::size_t i = 0; i < n; ++i) {
        out.times.push_back(path.times[i]);
        if (i == 0) {
            out.unwrapped_phase.push_back(wrapped[0]);
            continue;
        }
        double inc = wrapped[i] - wrapped[i - 1];
        double w = inc - p * std::round(inc / p);
        if (std::abs(w) >= 0.5 * p - 1e-12 * p) ++out.jump_warnings;
        out.unwrapped_phase.push_back(out.unwrapped_phase.back() + w);
    }
    return out;
}

ItoCheck ito_residual_check(const KilledPath& path, const IsochronMap& iso) {
    ItoCheck out;
    std::size_t n = 0;
    while (n < path.times.size() && path.times[n] < path.tau) ++n;
    if (n == 0) return out;
    const double sigma = iso.dynamics().sigma();
    const double p = iso.period();
    IsochronMap::Local prev = iso.local(path.snapshots[0]);
    double phase = 0.0;
    out.residual.push_back(0.0);
    for (std::size_t i = 1; i < n; ++i) {
        IsochronMap::Local cur = iso.local(path.snapshots[i]);
        double dt = path.times[i] - path.times[i - 1];
        double inc = cur.phase - prev.phase;
        inc -= p * std::round(inc / p);
        double drift = (prev.drift_term + sigma * sigma * prev.ito_term) * dt;
        double g2 = 0.0;
        for (double g : prev.noise_gradient) g2 += g * g;
        double m = inc - drift;
        phase += inc;
        out.drift_integral += drift;
        out.qv_empirical += m * m;
        out.qv_predicted += sigma * sigma * g2 * dt;
        out.residual.push_back(phase - out.drift_integral);
        prev = std::move(cur);
    }
    out.delta_phase = phase;
    return out;
}

std::vector<Observable<std::vector<double>>> phase_observables(const IsochronMap& iso) {
    std::vector<Observable<std::vector<double>>> obs;
    obs.push_back({"phase", [&iso](const std::vector<double>& x) { return iso.phase_of(x); }, true, iso.period()});
    obs.push_back({"phase_drift", [&iso](const std::vector<double>& x) { return iso.drift_integrand(x); }});
    return obs;
}

namespace {
// Relative accuracy of phase values (the default Cauchy tolerance).
constexpr double kPhaseResolution = 1e-6;
}  // namespace

FrequencyEstimate quasi_asymptotic_frequency(const FvTimeline& tl, std::size_t phase_obs,
                                             std::size_t integrand_obs, double period, double c0,
                                             double burn_in, double end_exclusion) {
    require(period > 0.0, "frequency: period must be positive");
    QedEstimate slope = qed_phase_velocity(tl, phase_obs, burn_in, end_exclusion);
    QedEstimate beta = qed_time_average(tl, integrand_obs, burn_in, end_exclusion);
    FrequencyEstimate out;
    out.c0 = c0;
    out.slope = slope.value / period;
    out.slope_se = slope.std_error / period;
    out.beta_integral = beta.value / period;
    out.beta_integral_se = beta.std_error / period;
    out.window_start = slope.window_start;
    out.window_end = slope.window_end;
    double diff = std::abs(out.slope - out.beta_integral);
    // At sigma = 0 both estimators are deterministic; agreement is then
    // judged against the resolution of the isochron itself.
    double se = std::max(std::hypot(out.slope_se, out.beta_integral_se), kPhaseResolution * std::abs(c0));
    out.z_agreement = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
    return out;
}

FrequencyDecomposition frequency_decomposition(std::vector<SweepPoint> sweep) {
    std::sort(sweep.begin(), sweep.end(), [](const SweepPoint& a, const SweepPoint& b) { return a.sigma < b.sigma; });
    std::vector<double> distinct;
    for (const auto& p : sweep) {
        require(std::isfinite(p.sigma) && p.sigma >= 0.0 && std::isfinite(p.c) && p.std_error >= 0.0,
                "frequency_decomposition: rows need sigma >= 0, finite c and se >= 0");
        if (distinct.empty() || p.sigma != distinct.back()) distinct.push_back(p.sigma);
    }
    if (distinct.size() < 4 || distinct.front() != 0.0) {
        fail(ErrorKind::insufficient_sweep, "frequency_decomposition: need at least 4 distinct sigma values including 0 (got " +
                                                std::to_string(distinct.size()) + ")");
    }
    // Deterministic rows (sigma = 0) report se = 0; floor them at the phase
    // resolution so they carry a finite, dominant weight.
    double c_scale = 0.0;
    for (const auto& p : sweep) c_scale = std::max(c_scale, std::abs(p.c));
    for (auto& p : sweep) p.std_error = std::max(p.std_error, kPhaseResolution * c_scale);
    std::vector<double> s2, c, w;
    bool weighted = true;
    for (const auto& p : sweep) weighted = weighted && p.std_error > 0.0;
    for (const auto& p : sweep) {
        s2.push_back(p.sigma * p.sigma);
        c.push_back(p.c);
        w.push_back(weighted ? 1.0 / (p.std_error * p.std_error) : 1.0);
    }
    LinearFit fit = weighted_linear_fit(s2, c, w);
    FrequencyDecomposition out;
    out.c0_hat = fit.intercept;
    out.quad_coeff = fit.slope;
    out.quad_coeff_se = fit.slope_stderr;
    {
        double sw = 0.0, swx = 0.0;
        for (std::size_t i = 0; i < s2.size(); ++i) {
            sw += w[i];
            swx += w[i] * s2[i];
        }
        double mx = swx / sw, sxx = 0.0;
        for (std::size_t i = 0; i < s2.size(); ++i) sxx += w[i] * (s2[i] - mx) * (s2[i] - mx);
        if (weighted) {
            // Known row errors: the covariance of the fit follows from the weights alone.
            out.quad_coeff_se = 1.0 / std::sqrt(sxx);
            out.c0_hat_se = std::sqrt(1.0 / sw + mx * mx / sxx);
        } else {
            out.c0_hat_se = fit.slope_stderr * std::sqrt(sxx / sw + mx * mx);
        }
    }
    double c0_sum = 0.0, c0_w = 0.0, c0_var = 0.0;
    for (const auto& p : sweep) {
        if (p.sigma != 0.0) continue;
        c0_sum += p.c;
        c0_w += 1.0;
        c0_var += p.std_error * p.std_error;
    }
    out.c0_measured = c0_sum / c0_w;
    const double c0_se = std::sqrt(c0_var) / c0_w;

    std::vector<double> ds2, ratio, rw;
    bool ratio_weighted = true;
    for (const auto& p : sweep) {
        SweepRow r;
        r.sigma = p.sigma;
        r.c = p.c;
        r.std_error = p.std_error;
        r.estimator = p.estimator;
        r.shift = p.c - out.c0_measured;
        r.shift_se = std::hypot(p.std_error, c0_se);
        r.departure = p.c - (out.c0_hat + out.quad_coeff * p.sigma * p.sigma);
        if (p.sigma > 0.0) {
            double s2v = p.sigma * p.sigma;
            r.quad_coeff = r.shift / s2v;
            r.quad_coeff_se = r.shift_se / s2v;
            ds2.push_back(s2v);
            ratio.push_back(r.quad_coeff);
            ratio_weighted = ratio_weighted && r.quad_coeff_se > 0.0;
            rw.push_back(r.quad_coeff_se);
        } else {
            r.quad_coeff = std::numeric_limits<double>::quiet_NaN();
            r.quad_coeff_se = std::numeric_limits<double>::quiet_NaN();
        }
        out.rows.push_back(r);
    }
    for (double& v : rw) v = ratio_weighted ? 1.0 / (v * v) : 1.0;
    std::vector<double> uniq = ds2;
    std::sort(uniq.begin(), uniq.end());
    uniq.erase(std::unique(uniq.begin(), uniq.end()), uniq.end());
    if (uniq.size() >= 2) {
        LinearFit dep = weighted_linear_fit(ds2, ratio, rw);
        out.departure_slope = dep.slope;
        if (ratio_weighted) {
            double sw = 0.0, swx = 0.0;
            for (std::size_t i = 0; i < ds2.size(); ++i) {
                sw += rw[i];
                swx += rw[i] * ds2[i];
            }
            double sxx = 0.0;
            for (std::size_t i = 0; i < ds2.size(); ++i) sxx += rw[i] * (ds2[i] - swx / sw) * (ds2[i] - swx / sw);
            out.departure_slope_se = 1.0 / std::sqrt(sxx);
        } else {
            out.departure_slope_se = dep.slope_stderr;
        }
    }
    return out;
}

Polynomial radial_twist_drift(double omega, double beta) {
    auto m = [](double c, unsigned px, unsigned py) { return Monomial{c, {px, py}}; };
    // x' = x (1 - R) - y (omega + beta R (1 - R)) with R = x^2 + y^2, y' by symmetry.
    std::vector<Monomial> dx = {m(1, 1, 0),     m(-1, 3, 0),   m(-1, 1, 2),       m(-omega, 0, 1),
                                m(-beta, 2, 1), m(-beta, 0, 3), m(beta, 4, 1),     m(2 * beta, 2, 3),
                                m(beta, 0, 5)};
    std::vector<Monomial> dy = {m(1, 0, 1),    m(-1, 2, 1),   m(-1, 0, 3),       m(omega, 1, 0),
                                m(beta, 3, 0), m(beta, 1, 2), m(-beta, 5, 0),    m(-2 * beta, 3, 2),
                                m(-beta, 1, 4)};
    return Polynomial(2, {dx, dy});
}

double radial_twist_phase(std::span<const double> x, double omega, double beta) {
    require(x.size() == 2, "radial_twist_phase: state must be planar");
    const double two_pi = 2.0 * std::acos(-1.0);
    double r2 = x[0] * x[0] + x[1] * x[1];
    double psi = std::atan2(x[1], x[0]) - 0.5 * beta * (r2 - 1.0);
    return positive_mod(psi, two_pi) / omega;
}

PatternManifold radial_twist_manifold(double omega, std::size_t n) {
    const double two_pi = 2.0 * std::acos(-1.0);
    std::vector<std::vector<double>> table(n);
    for (std::size_t i = 0; i < n; ++i) {
        double a = two_pi * static_cast<double>(i) / static_cast<double>(n);
        table[i] = {std::cos(a), std::sin(a)};
    }
    return PatternManifold::cycle(std::move(table), two_pi / omega);
}

}  // namespace qpattern
