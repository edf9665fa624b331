#include "qpattern/ensemble.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

namespace qpattern {

ChainProcess::ChainProcess(const SubMarkovMatrix& q) : q_(&q) {
    q.validate();
    cumulative_.resize(q.n * q.n);
    for (std::size_t i = 0; i < q.n; ++i) {
        double acc = 0.0;
        for (std::size_t j = 0; j < q.n; ++j) {
            acc += q(i, j);
            cumulative_[i * q.n + j] = acc;
        }
    }
}

StepOutcome ChainProcess::advance(State& s, CounterStream& rng) const {
    const std::size_t n = q_->n;
    double u = rng.uniform();
    auto row = cumulative_.begin() + static_cast<std::ptrdiff_t>(s * n);
    auto it = std::upper_bound(row, row + static_cast<std::ptrdiff_t>(n), u);
    if (it == row + static_cast<std::ptrdiff_t>(n)) return {false, false};
    s = static_cast<std::size_t>(it - row);
    return {true, false};
}

StepOutcome DynamicsProcess::advance(State& s, CounterStream& rng) const {
    try {
        dyn_->step(s, rng);
    } catch (const Error& e) {
        if (e.kind() == ErrorKind::non_finite) return {false, true};
        throw;
    }
    return {inside_(s), false};
}

SurvivalCurve curve_from_kill_steps(std::span<const std::uint64_t> kill_steps, std::size_t n_steps, double dt) {
    require(!kill_steps.empty(), "survival curve: no paths");
    std::vector<std::size_t> deaths(n_steps + 2, 0);
    for (auto k : kill_steps) deaths[std::min<std::uint64_t>(k, n_steps + 1)] += 1;
    SurvivalCurve c;
    c.n_paths = kill_steps.size();
    std::size_t alive = kill_steps.size();
    for (std::size_t k = 0; k <= n_steps; ++k) {
        alive -= deaths[k];
        c.times.push_back(static_cast<double>(k) * dt);
        c.prob.push_back(static_cast<double>(alive) / static_cast<double>(c.n_paths));
    }
    return c;
}

SurvivalCurve fv_survival_curve(const FvTimeline& tl) {
    SurvivalCurve c;
    double p = 1.0;
    c.times.push_back(0.0);
    c.prob.push_back(1.0);
    for (std::size_t k = 0; k < tl.kill_fraction.size(); ++k) {
        p *= 1.0 - tl.kill_fraction[k];
        c.times.push_back(static_cast<double>(k + 1) * tl.dt);
        c.prob.push_back(p);
    }
    return c;
}

namespace {

// Variance of ln P_hat for a binomial proportion from n paths.
double log_prob_variance(double p, std::size_t n) {
    if (n == 0) return 0.0;
    return (1.0 - p) / (static_cast<double>(n) * p);
}

}  // namespace

Lambda1Estimate estimate_lambda1(const SurvivalCurve& curve, double t_min) {
    require(curve.times.size() == curve.prob.size(), "estimate_lambda1: times and probabilities differ in length");
    const double floor = curve.n_paths > 0 ? 10.0 / static_cast<double>(curve.n_paths) : 0.0;
    std::vector<double> t, y, var;
    for (std::size_t k = 0; k < curve.prob.size(); ++k) {
        double p = curve.prob[k];
        if (!(p > floor) || p <= 0.0) break;
        if (curve.times[k] < t_min) continue;
        t.push_back(curve.times[k]);
        y.push_back(std::log(p));
        var.push_back(log_prob_variance(p, curve.n_paths));
    }
    const std::size_t n = t.size();
    if (n < 10) fail(ErrorKind::no_linear_tail, "estimate_lambda1: fewer than 10 points above the noise floor");
    if (!(y.back() < y.front())) fail(ErrorKind::no_linear_tail, "estimate_lambda1: survival curve does not decay");

    const std::size_t seg = std::max<std::size_t>(2, n / 10);
    auto tail_slope = [&](std::size_t i) {
        return linear_fit(std::span(t).subspan(i), std::span(y).subspan(i)).slope;
    };
    // First start whose tail fit every later local slope agrees with, to 10%
    // plus three standard errors of the local slope.
    std::size_t start = n;
    const std::size_t last_start = n - 10;
    const std::size_t stride = std::max<std::size_t>(1, last_start / 200);
    for (std::size_t i = 0; i <= last_start; i += stride) {
        double s = tail_slope(i);
        if (!(s < 0.0)) continue;
        bool ok = true;
        for (std::size_t j = i; j + seg < n && ok; ++j) {
            double local = (y[j + seg] - y[j]) / (t[j + seg] - t[j]);
            double se = std::sqrt(var[j] + var[j + seg]) / (t[j + seg] - t[j]);
            ok = std::abs(local - s) <= 0.1 * std::abs(s) + 3.0 * se;
        }
        if (ok) {
            start = i;
            break;
        }
    }
    if (start == n) fail(ErrorKind::no_linear_tail, "estimate_lambda1: local slope never settles");

    auto ts = std::span(t).subspan(start);
    auto ys = std::span(y).subspan(start);
    LinearFit fit = linear_fit(ts, ys);
    if (!(fit.slope < 0.0)) fail(ErrorKind::no_linear_tail, "estimate_lambda1: tail does not decay");
    if (fit.r2 < 0.95 && fit.r2 < 1.0 - 1e-12) {
        fail(ErrorKind::no_linear_tail, "estimate_lambda1: tail R^2 = " + std::to_string(fit.r2) + " < 0.95");
    }
    // ln P is a random walk: the OLS slope is sum_k c_k d_k over the
    // increments d_k with c_k = sum_{i >= k} w_i, so for independent
    // increments Var = sum c_k^2 Var(d_k). Independent paths give the
    // binomial Var(d_k) = (1 - r) / (r n P_{k-1}) with r = P_k / P_{k-1};
    // otherwise (Fleming-Viot curves) the increments share one variance per
    // unit time, estimated from the window.
    const std::size_t m = ts.size();
    double tbar = 0.0;
    for (double v : ts) tbar += v;
    tbar /= static_cast<double>(m);
    double sxx = 0.0;
    for (double v : ts) sxx += (v - tbar) * (v - tbar);
    std::vector<double> inc;
    double c2 = 0.0, binomial = 0.0, tail = 0.0;
    const double n_paths = static_cast<double>(curve.n_paths);
    for (std::size_t k = m - 1; k >= 1; --k) {
        tail += (ts[k] - tbar) / sxx;
        double h = ts[k] - ts[k - 1];
        inc.push_back((ys[k] - ys[k - 1]) / std::sqrt(h));
        c2 += tail * tail * h;
        if (curve.n_paths > 0) {
            double r = std::exp(ys[k] - ys[k - 1]);
            binomial += tail * tail * (1.0 - r) / (r * n_paths * std::exp(ys[k - 1]));
        }
    }
    Lambda1Estimate out;
    out.lambda1 = -fit.slope;
    out.std_error = std::sqrt(curve.n_paths > 0 ? binomial : sample_variance(inc) * c2);
    out.window_start = ts.front();
    out.window_end = ts.back();
    out.r2 = fit.r2;
    out.n_points = m;
    return out;
}

namespace {

std::size_t first_record_at(const FvTimeline& tl, double t) {
    const double eps = 1e-9 * std::max(1.0, tl.dt);
    auto it = std::lower_bound(tl.record_times.begin(), tl.record_times.end(), t - eps);
    return static_cast<std::size_t>(it - tl.record_times.begin());
}

// Last record at or before t; n_records() when there is none.
std::size_t last_record_at(const FvTimeline& tl, double t) {
    const double eps = 1e-9 * std::max(1.0, tl.dt);
    auto it = std::upper_bound(tl.record_times.begin(), tl.record_times.end(), t + eps);
    if (it == tl.record_times.begin()) return tl.n_records();
    return static_cast<std::size_t>(it - tl.record_times.begin()) - 1;
}

bool any_killing(const FvTimeline& tl) {
    return std::any_of(tl.kill_fraction.begin(), tl.kill_fraction.end(), [](double k) { return k > 0.0; });
}

}  // namespace

QsdSnapshot qsd_snapshot(const FvTimeline& tl, double burn_in, double gamma) {
    if (gamma > 0.0) {
        require(burn_in >= 10.0 / gamma * (1.0 - 1e-9),
                "qsd_snapshot: burn-in " + std::to_string(burn_in) + " is shorter than 10 / gamma = " +
                    std::to_string(10.0 / gamma));
    }
    if (!any_killing(tl)) {
        fail(ErrorKind::not_stationary, "qsd_snapshot: no particle was ever killed; the conditioned law is degenerate");
    }
    const std::size_t r0 = first_record_at(tl, burn_in);
    const std::size_t nr = tl.n_records() > r0 ? tl.n_records() - r0 : 0;
    if (nr < 10) fail(ErrorKind::not_stationary, "qsd_snapshot: fewer than 10 records after burn-in");
    const std::size_t half = nr / 2;
    const std::size_t half_batches = std::clamp<std::size_t>(half / 4, 2, 10);

    QsdSnapshot out;
    out.burn_in = burn_in;
    std::string offenders;
    for (std::size_t k = 0; k < tl.n_observables(); ++k) {
        std::vector<double> series(nr);
        for (std::size_t r = 0; r < nr; ++r) series[r] = tl.cloud_mean[r0 + r][k];
        FunctionalEstimate f;
        f.name = tl.observable_names[k];
        Estimate all = batch_means(series, 10);
        Estimate a = batch_means(std::span(series).first(half), half_batches);
        Estimate b = batch_means(std::span(series).subspan(half), half_batches);
        f.value = all.value;
        f.std_error = all.std_error;
        f.first_half = a.value;
        f.first_half_se = a.std_error;
        f.second_half = b.value;
        f.second_half_se = b.std_error;
        double diff = std::abs(a.value - b.value);
        double se = std::hypot(a.std_error, b.std_error);
        f.z_halves = se > 0.0 ? diff / se : (diff == 0.0 ? 0.0 : std::numeric_limits<double>::infinity());
        if (f.z_halves > 3.0) {
            out.stationary = false;
            offenders += (offenders.empty() ? "" : ", ") + f.name + " (z = " + std::to_string(f.z_halves) + ")";
        }
        out.functionals.push_back(f);
    }
    if (!out.stationary) fail(ErrorKind::not_stationary, "qsd_snapshot: halves disagree for " + offenders);
    return out;
}

QedEstimate qed_time_average(const FvTimeline& tl, std::size_t k, double burn_in, double end_exclusion) {
    require(k < tl.n_observables(), "qed_time_average: observable index out of range");
    require(!tl.lineage.empty(), "qed_time_average: timeline has no lineage data");
    require(end_exclusion >= 0.0, "qed_time_average: end exclusion must be >= 0");
    const double t_end = tl.record_times.back();
    const std::size_t r0 = first_record_at(tl, burn_in);
    const std::size_t r1 = last_record_at(tl, t_end - end_exclusion);
    if (r0 >= tl.n_records() || r1 >= tl.n_records() || r1 <= r0) {
        fail(ErrorKind::invalid_argument, "qed_time_average: empty window [" + std::to_string(burn_in) + ", " +
                                              std::to_string(t_end - end_exclusion) + "]");
    }
    const std::size_t K = tl.n_observables();
    constexpr std::size_t kBatches = 10;
    std::vector<double> bsum(kBatches, 0.0), bcount(kBatches, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < tl.lineage.size(); ++i) {
        const auto& h = tl.lineage[i];
        double acc = 0.0;
        for (std::size_t r = r0; r <= r1; ++r) acc += h[r * K + k];
        double avg = acc / static_cast<double>(r1 - r0 + 1);
        std::size_t b = tl.lineage_slot[i][r0] % kBatches;
        bsum[b] += avg;
        bcount[b] += 1.0;
        total += avg;
    }
    std::vector<double> bmeans;
    for (std::size_t b = 0; b < kBatches; ++b) {
        if (bcount[b] > 0.0) bmeans.push_back(bsum[b] / bcount[b]);
    }
    QedEstimate out;
    out.name = tl.observable_names[k];
    out.value = total / static_cast<double>(tl.lineage.size());
    out.std_error = mean_of_batches(bmeans).std_error;
    out.window_start = tl.record_times[r0];
    out.window_end = tl.record_times[r1];
    return out;
}

QedEstimate qed_phase_velocity(const FvTimeline& tl, std::size_t k, double burn_in, double end_exclusion) {
    require(k < tl.n_observables(), "qed_phase_velocity: observable index out of range");
    require(!tl.lineage.empty(), "qed_phase_velocity: timeline has no lineage data");
    const double t_end = tl.record_times.back();
    const std::size_t r0 = first_record_at(tl, burn_in);
    const std::size_t r1 = last_record_at(tl, t_end - end_exclusion);
    if (r0 >= tl.n_records() || r1 >= tl.n_records() || r1 <= r0) fail(ErrorKind::invalid_argument, "qed_phase_velocity: empty window");
    const std::size_t K = tl.n_observables();
    const double span_t = tl.record_times[r1] - tl.record_times[r0];
    constexpr std::size_t kBatches = 10;
    std::vector<double> bsum(kBatches, 0.0), bcount(kBatches, 0.0);
    double total = 0.0;
    for (std::size_t i = 0; i < tl.lineage.size(); ++i) {
        const auto& h = tl.lineage[i];
        double v = (h[r1 * K + k] - h[r0 * K + k]) / span_t;
        std::size_t b = tl.lineage_slot[i][r0] % kBatches;
        bsum[b] += v;
        bcount[b] += 1.0;
        total += v;
    }
    std::vector<double> bmeans;
    for (std::size_t b = 0; b < kBatches; ++b) {
        if (bcount[b] > 0.0) bmeans.push_back(bsum[b] / bcount[b]);
    }
    QedEstimate out;
    out.name = tl.observable_names[k];
    out.value = total / static_cast<double>(tl.lineage.size());
    out.std_error = mean_of_batches(bmeans).std_error;
    out.window_start = tl.record_times[r0];
    out.window_end = tl.record_times[r1];
    return out;
}

Estimate estimate_gamma(const FvTimeline& tl, std::size_t k, double burn_in) {
    require(k < tl.n_observables(), "estimate_gamma: observable index out of range");
    require(!tl.lineage.empty(), "estimate_gamma: timeline has no lineage data");
    const std::size_t K = tl.n_observables();
    const std::size_t r0 = first_record_at(tl, burn_in);
    const std::size_t nr = tl.n_records() > r0 ? tl.n_records() - r0 : 0;
    require(nr >= 8, "estimate_gamma: fewer than 8 records after burn-in");
    double m = 0.0, cnt = 0.0;
    for (const auto& h : tl.lineage) {
        for (std::size_t r = r0; r < tl.n_records(); ++r) {
            m += h[r * K + k];
            cnt += 1.0;
        }
    }
    m /= cnt;
    auto cov = [&](std::size_t lag) {
        double acc = 0.0, c = 0.0;
        for (const auto& h : tl.lineage) {
            for (std::size_t r = r0; r + lag < tl.n_records(); ++r) {
                acc += (h[r * K + k] - m) * (h[(r + lag) * K + k] - m);
                c += 1.0;
            }
        }
        return acc / c;
    };
    const double c0 = cov(0);
    if (!(c0 > 0.0)) fail(ErrorKind::not_converged, "estimate_gamma: observable has no variance after burn-in");
    const double dt_rec = tl.dt * static_cast<double>(tl.record_stride);
    std::vector<double> lags, logc;
    for (std::size_t lag = 1; lag <= nr / 2; ++lag) {
        double c = cov(lag) / c0;
        if (!(c > 0.05)) break;
        lags.push_back(static_cast<double>(lag) * dt_rec);
        logc.push_back(std::log(c));
    }
    if (lags.size() < 3) {
        fail(ErrorKind::not_converged,
             "estimate_gamma: correlation decays within " + std::to_string(lags.size() + 1) +
                 " records; use a smaller record stride");
    }
    LinearFit fit = linear_fit(lags, logc);
    return {-fit.slope, fit.slope_stderr};
}

Estimate fv_lambda1(const FvTimeline& tl, double burn_in) {
    std::vector<double> rates;
    for (std::size_t n = 0; n < tl.kill_fraction.size(); ++n) {
        if (static_cast<double>(n) * tl.dt + 1e-9 * tl.dt < burn_in) continue;
        rates.push_back(-std::log1p(-tl.kill_fraction[n]) / tl.dt);
    }
    require(rates.size() >= 10, "fv_lambda1: fewer than 10 steps after burn-in");
    return batch_means(rates, 10);
}

PhiEstimate phi_from_survival(std::span<const double> survival, std::size_t n_paths, double lambda1,
                              double lambda1_se, double t_probe) {
    PhiEstimate out;
    const double growth = std::exp(lambda1 * t_probe);
    const double nn = static_cast<double>(n_paths);
    for (double p : survival) {
        double se = std::sqrt(p * (1.0 - p) / nn);
        double phi = growth * p;
        out.survival.push_back(p);
        out.survival_se.push_back(se);
        out.phi.push_back(phi);
        out.phi_se.push_back(std::hypot(growth * se, t_probe * phi * lambda1_se));
    }
    const double inf = std::numeric_limits<double>::infinity();
    const double p0 = survival[0];
    for (std::size_t i = 0; i < survival.size(); ++i) {
        double p = survival[i];
        if (p0 <= 0.0) {
            out.ratio.push_back(inf);
            out.ratio_se.push_back(inf);
            continue;
        }
        double r = p / p0;
        double rel0 = out.survival_se[0] / p0;
        double rel = p > 0.0 ? out.survival_se[i] / p : inf;
        out.ratio.push_back(r);
        out.ratio_se.push_back(i == 0 ? 0.0 : (p > 0.0 ? r * std::hypot(rel0, rel) : inf));
    }
    return out;
}

KernelPhi::KernelPhi(std::vector<double> coords, std::vector<double> values, double bandwidth, double period)
    : coords_(std::move(coords)), values_(std::move(values)), bandwidth_(bandwidth), period_(period) {
    require(coords_.size() == values_.size() && !coords_.empty(), "KernelPhi: need matching non-empty samples");
    require(bandwidth_ > 0.0, "KernelPhi: bandwidth must be positive");
}

double KernelPhi::operator()(double coord) const {
    double num = 0.0, den = 0.0;
    for (std::size_t i = 0; i < coords_.size(); ++i) {
        double d = coord - coords_[i];
        if (period_ > 0.0) d -= period_ * std::round(d / period_);
        double w = std::exp(-0.5 * (d * d) / (bandwidth_ * bandwidth_));
        num += w * values_[i];
        den += w;
    }
    if (!(den > 0.0)) fail(ErrorKind::degenerate_weights, "KernelPhi: query is far from every sample");
    return num / den;
}

}  // namespace qpattern
