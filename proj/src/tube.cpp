#include "qpattern/tube.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <istream>
#include <numbers>
#include <ostream>
#include <sstream>

#include "qpattern/error.hpp"

namespace qpattern {

struct PatternManifold::Cache {
    // Waves only.
    std::optional<ModeTransform> transform;
    std::vector<double> ref_modes;
    std::vector<std::vector<std::complex<double>>> ref_spectrum_conj;
    std::optional<Fft> fft;
    // Both kinds.
    FourierCurve curve;
};

namespace {

constexpr double kGolden = 0.6180339887498949;

double wrap(double v, double period) {
    double r = std::fmod(v, period);
    if (r < 0.0) {
        r += period;
    }
    if (r >= period) {
        r = 0.0;
    }
    return r;
}

template <class F>
double golden_minimize(F&& f, double lo, double hi, double tol, double& best_value) {
    double a = lo, b = hi;
    double c = b - kGolden * (b - a);
    double d = a + kGolden * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc <= fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - kGolden * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + kGolden * (b - a);
            fd = f(d);
        }
    }
    double x = fc <= fd ? c : d;
    best_value = std::min(fc, fd);
    return x;
}

// Mode coefficients of the profile translated by s, in place from ref.
void shifted_modes(const Grid& g, std::span<const double> ref, double s, std::span<double> out) {
    const std::size_t nm = g.n_modes();
    const std::size_t n = g.n_grid;
    for (std::size_t c = 0; c < g.n_comp; ++c) {
        const double* r = ref.data() + c * nm;
        double* o = out.data() + c * nm;
        o[0] = r[0];
        for (std::size_t k = 1; k < n / 2; ++k) {
            double q = g.wavenumber(2 * k - 1);
            double cs = std::cos(q * s), sn = std::sin(q * s);
            double a = r[2 * k - 1], b = r[2 * k];
            o[2 * k - 1] = a * cs - b * sn;
            o[2 * k] = a * sn + b * cs;
        }
        o[nm - 1] = r[nm - 1] * std::cos(g.wavenumber(nm - 1) * s);
    }
}

double integer_shift_sup(std::span<const double> x, std::span<const double> ref, const Grid& g, long r) {
    const auto n = static_cast<long>(g.n_grid);
    double m = 0.0;
    for (std::size_t c = 0; c < g.n_comp; ++c) {
        const double* xc = x.data() + c * g.n_grid;
        const double* rc = ref.data() + c * g.n_grid;
        for (long j = 0; j < n; ++j) {
            long src = ((j - r) % n + n) % n;
            m = std::max(m, std::abs(xc[j] - rc[src]));
        }
    }
    return m;
}

double integer_shift_l2sq(std::span<const double> x, std::span<const double> ref, const Grid& g, long r) {
    const auto n = static_cast<long>(g.n_grid);
    double s = 0.0;
    for (std::size_t c = 0; c < g.n_comp; ++c) {
        const double* xc = x.data() + c * g.n_grid;
        const double* rc = ref.data() + c * g.n_grid;
        for (long j = 0; j < n; ++j) {
            long src = ((j - r) % n + n) % n;
            double d = xc[j] - rc[src];
            s += d * d;
        }
    }
    return s * g.dx();
}

// Correlation peaks (circular local maxima), best first, ties to smaller shift.
std::vector<long> correlation_peaks(std::span<const double> x, const PatternManifold& m, std::size_t count) {
    const Grid& g = *m.grid;
    const std::size_t n = g.n_grid;
    const auto& cache = *m.cache;
    std::vector<double> total(n, 0.0);
    thread_local std::vector<std::complex<double>> buf;
    buf.resize(n);
    for (std::size_t c = 0; c < g.n_comp; ++c) {
        for (std::size_t j = 0; j < n; ++j) {
            buf[j] = {x[c * n + j], 0.0};
        }
        cache.fft->forward(buf);
        for (std::size_t k = 0; k < n; ++k) {
            buf[k] *= cache.ref_spectrum_conj[c][k];
        }
        cache.fft->inverse(buf);
        for (std::size_t s = 0; s < n; ++s) {
            total[s] += buf[s].real();
        }
    }
    std::vector<long> peaks;
    for (std::size_t s = 0; s < n; ++s) {
        double prev = total[(s + n - 1) % n];
        double next = total[(s + 1) % n];
        if (total[s] >= prev && total[s] >= next) {
            peaks.push_back(static_cast<long>(s));
        }
    }
    if (peaks.empty()) {
        peaks.push_back(0);
    }
    std::stable_sort(peaks.begin(), peaks.end(), [&](long a, long b) { return total[a] > total[b]; });
    if (peaks.size() > count) {
        peaks.resize(count);
    }
    return peaks;
}

struct WaveCoarse {
    long shift = 0;
    double dist = 0.0;
};

WaveCoarse wave_coarse(std::span<const double> x, const TubeSpec& tube) {
    const auto& m = tube.manifold;
    const Grid& g = *m.grid;
    WaveCoarse best{0, std::numeric_limits<double>::infinity()};
    for (long r : correlation_peaks(x, m, 3)) {
        double d = tube.norm == DistanceNorm::sup ? integer_shift_sup(x, m.reference, g, r)
                                                  : std::sqrt(integer_shift_l2sq(x, m.reference, g, r));
        if (d < best.dist || (d == best.dist && r < best.shift)) {
            best = {r, d};
        }
    }
    return best;
}

TubeDistance wave_distance(std::span<const double> x, const TubeSpec& tube) {
    const auto& m = tube.manifold;
    const Grid& g = *m.grid;
    const auto& cache = *m.cache;
    WaveCoarse coarse = wave_coarse(x, tube);
    const double dx = g.dx();
    const double L = g.length;
    double lo = (static_cast<double>(coarse.shift) - 1.0) * dx;
    double hi = (static_cast<double>(coarse.shift) + 1.0) * dx;
    double refined = 0.0;
    double s_best = 0.0;
    if (tube.norm == DistanceNorm::sup) {
        std::vector<double> modes(cache.ref_modes.size());
        std::vector<double> row(g.n_grid);
        const std::size_t nm = g.n_modes();
        auto objective = [&](double s) {
            shifted_modes(g, cache.ref_modes, s, modes);
            double d = 0.0;
            for (std::size_t c = 0; c < g.n_comp; ++c) {
                cache.transform->to_grid(std::span<const double>(modes.data() + c * nm, nm), row);
                for (std::size_t j = 0; j < g.n_grid; ++j) {
                    d = std::max(d, std::abs(x[c * g.n_grid + j] - row[j]));
                }
            }
            return d;
        };
        s_best = golden_minimize(objective, lo, hi, 1e-9 * dx, refined);
    } else {
        std::vector<double> xm(cache.ref_modes.size());
        const std::size_t nm = g.n_modes();
        for (std::size_t c = 0; c < g.n_comp; ++c) {
            cache.transform->to_modes(x.subspan(c * g.n_grid, g.n_grid),
                                      std::span<double>(xm.data() + c * nm, nm));
        }
        std::vector<double> modes(xm.size());
        auto objective = [&](double s) {
            shifted_modes(g, cache.ref_modes, s, modes);
            double d = 0.0;
            for (std::size_t i = 0; i < xm.size(); ++i) {
                double e = xm[i] - modes[i];
                d += e * e;
            }
            return std::sqrt(d);
        };
        s_best = golden_minimize(objective, lo, hi, 1e-9 * dx, refined);
    }
    if (coarse.dist <= refined) {
        return {coarse.dist, wrap(static_cast<double>(coarse.shift) * dx, L)};
    }
    return {refined, wrap(s_best, L)};
}

double row_distance(std::span<const double> x, std::span<const double> row, DistanceNorm norm, double w) {
    if (norm == DistanceNorm::sup) {
        return sup_distance(x, row);
    }
    double s = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        double d = x[i] - row[i];
        s += d * d;
    }
    return std::sqrt(w * s);
}

struct CycleCoarse {
    std::size_t index = 0;
    double dist = 0.0;
};

CycleCoarse cycle_coarse(std::span<const double> x, const TubeSpec& tube) {
    const auto& m = tube.manifold;
    CycleCoarse best{0, std::numeric_limits<double>::infinity()};
    double w = m.l2_weight();
    for (std::size_t i = 0; i < m.table.size(); ++i) {
        double d = row_distance(x, m.table[i], tube.norm, w);
        if (d < best.dist) {
            best = {i, d};
        }
    }
    return best;
}

TubeDistance cycle_distance(std::span<const double> x, const TubeSpec& tube) {
    const auto& m = tube.manifold;
    const std::size_t np = m.table.size();
    const double h = m.period_or_length / static_cast<double>(np);
    const double w = m.l2_weight();
    CycleCoarse coarse = cycle_coarse(x, tube);
    TubeDistance best{coarse.dist, static_cast<double>(coarse.index) * h};
    std::vector<double> p(x.size());
    for (int side = -1; side <= 0; ++side) {
        std::size_t i0 = (coarse.index + np + static_cast<std::size_t>(side + 1) - 1) % np;
        const auto& a = m.table[i0];
        const auto& b = m.table[(i0 + 1) % np];
        double t = 0.0, d = 0.0;
        if (tube.norm == DistanceNorm::l2) {
            double num = 0.0, den = 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) {
                double e = b[k] - a[k];
                num += (x[k] - a[k]) * e;
                den += e * e;
            }
            t = den > 0.0 ? std::clamp(num / den, 0.0, 1.0) : 0.0;
            for (std::size_t k = 0; k < x.size(); ++k) {
                p[k] = a[k] + t * (b[k] - a[k]);
            }
            d = row_distance(x, p, tube.norm, w);
        } else {
            auto objective = [&](double tt) {
                double mx = 0.0;
                for (std::size_t k = 0; k < x.size(); ++k) {
                    mx = std::max(mx, std::abs(x[k] - (a[k] + tt * (b[k] - a[k]))));
                }
                return mx;
            };
            t = golden_minimize(objective, 0.0, 1.0, 1e-10, d);
        }
        double phase = wrap((static_cast<double>(i0) + t) * h, m.period_or_length);
        if (d < best.dist || (d == best.dist && phase < best.phase)) {
            best = {d, phase};
        }
    }
    return best;
}

void check_dimension(std::span<const double> x, const PatternManifold& m) {
    if (x.size() != m.dim) {
        fail(ErrorKind::grid_mismatch, "state dimension " + std::to_string(x.size()) +
                                           " does not match manifold dimension " + std::to_string(m.dim));
    }
}

void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f64(std::ostream& os, double v) {
    auto bits = std::bit_cast<std::uint64_t>(v);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(bits >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) fail(ErrorKind::io_error, "manifold: truncated binary");
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

double read_f64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) fail(ErrorKind::io_error, "manifold: truncated binary");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return std::bit_cast<double>(v);
}

std::shared_ptr<PatternManifold::Cache> make_cycle_cache(const PatternManifold& m) {
    auto cache = std::make_shared<PatternManifold::Cache>();
    cache->curve = FourierCurve(m.table, m.period_or_length);
    return cache;
}

}  // namespace

FourierCurve::FourierCurve(const std::vector<std::vector<double>>& samples, double period)
    : period_(period) {
    const std::size_t n = samples.size();
    require(n >= 4 && (n & (n - 1)) == 0, "fourier curve: sample count must be a power of two");
    require(period > 0.0, "fourier curve: period must be positive");
    dim_ = samples[0].size();
    Fft fft(n);
    const std::size_t kmax = n / 2 - 1;
    mean_.assign(dim_, 0.0);
    std::vector<std::vector<double>> a(kmax, std::vector<double>(dim_)), b(kmax, std::vector<double>(dim_));
    std::vector<std::complex<double>> buf(n);
    double scale = 0.0;
    for (std::size_t i = 0; i < dim_; ++i) {
        for (std::size_t j = 0; j < n; ++j) {
            buf[j] = {samples[j][i], 0.0};
            scale = std::max(scale, std::abs(samples[j][i]));
        }
        fft.forward(buf);
        mean_[i] = buf[0].real() / static_cast<double>(n);
        for (std::size_t k = 1; k <= kmax; ++k) {
            a[k - 1][i] = 2.0 * buf[k].real() / static_cast<double>(n);
            b[k - 1][i] = -2.0 * buf[k].imag() / static_cast<double>(n);
        }
    }
    // Drop the Nyquist harmonic and trailing harmonics at round-off level.
    std::size_t keep = 0;
    for (std::size_t k = 0; k < kmax; ++k) {
        double mag = std::max(sup_norm(a[k]), sup_norm(b[k]));
        if (mag > 1e-14 * std::max(scale, 1.0)) {
            keep = k + 1;
        }
    }
    a.resize(keep);
    b.resize(keep);
    cos_ = std::move(a);
    sin_ = std::move(b);
}

void FourierCurve::evaluate(double theta, std::span<double> point, std::span<double> d1,
                            std::span<double> d2) const {
    const double w = 2.0 * std::numbers::pi / period_;
    if (!point.empty()) std::copy(mean_.begin(), mean_.end(), point.begin());
    if (!d1.empty()) std::fill(d1.begin(), d1.end(), 0.0);
    if (!d2.empty()) std::fill(d2.begin(), d2.end(), 0.0);
    for (std::size_t k = 0; k < cos_.size(); ++k) {
        double kw = static_cast<double>(k + 1) * w;
        double cs = std::cos(kw * theta), sn = std::sin(kw * theta);
        const auto& a = cos_[k];
        const auto& b = sin_[k];
        for (std::size_t i = 0; i < dim_; ++i) {
            double val = a[i] * cs + b[i] * sn;
            if (!point.empty()) point[i] += val;
            if (!d1.empty()) d1[i] += kw * (b[i] * cs - a[i] * sn);
            if (!d2.empty()) d2[i] -= kw * kw * val;
        }
    }
}

PatternManifold PatternManifold::wave(const Field& profile, double speed) {
    profile.validate();
    require(profile.grid.boundary == Boundary::periodic, "wave manifold: periodic grid required");
    PatternManifold m;
    m.kind = ManifoldKind::wave_translates;
    m.grid = profile.grid;
    m.dim = profile.values.size();
    m.reference = profile.values;
    m.period_or_length = profile.grid.length;
    m.phase_velocity = speed;
    m.validate();

    auto cache = std::make_shared<Cache>();
    const Grid& g = profile.grid;
    cache->transform.emplace(g);
    cache->ref_modes = cache->transform->forward(profile);
    cache->fft.emplace(g.n_grid);
    cache->ref_spectrum_conj.resize(g.n_comp);
    for (std::size_t c = 0; c < g.n_comp; ++c) {
        auto& spec = cache->ref_spectrum_conj[c];
        spec.resize(g.n_grid);
        for (std::size_t j = 0; j < g.n_grid; ++j) {
            spec[j] = {profile.at(c, j), 0.0};
        }
        cache->fft->forward(spec);
        for (auto& z : spec) {
            z = std::conj(z);
        }
    }
    // Integer rotations sample the translate family exactly at its own resolution.
    std::vector<std::vector<double>> rows(g.n_grid);
    for (std::size_t r = 0; r < g.n_grid; ++r) {
        rows[r] = rotate(profile, static_cast<long>(r)).values;
    }
    cache->curve = FourierCurve(rows, g.length);
    m.cache = std::move(cache);
    return m;
}

PatternManifold PatternManifold::cycle(std::vector<std::vector<double>> table, double period,
                                       std::optional<Grid> grid) {
    PatternManifold m;
    m.kind = ManifoldKind::limit_cycle;
    m.grid = grid;
    require(!table.empty(), "cycle manifold: empty table");
    m.dim = table[0].size();
    m.table = std::move(table);
    m.period_or_length = period;
    m.phase_velocity = 1.0;
    m.validate();
    m.cache = make_cycle_cache(m);
    return m;
}

double PatternManifold::l2_weight() const noexcept {
    return grid && grid->n_grid > 0 ? grid->dx() : 1.0;
}

std::vector<double> PatternManifold::point(double phase) const {
    if (kind == ManifoldKind::wave_translates) {
        const Grid& g = *grid;
        std::vector<double> modes(cache->ref_modes.size());
        shifted_modes(g, cache->ref_modes, phase, modes);
        return cache->transform->inverse(modes).values;
    }
    const std::size_t np = table.size();
    double h = period_or_length / static_cast<double>(np);
    double u = wrap(phase, period_or_length) / h;
    auto i = static_cast<std::size_t>(std::floor(u));
    if (i >= np) i = np - 1;
    double t = u - static_cast<double>(i);
    const auto& a = table[i];
    const auto& b = table[(i + 1) % np];
    std::vector<double> out(dim);
    for (std::size_t k = 0; k < dim; ++k) {
        out[k] = a[k] + t * (b[k] - a[k]);
    }
    return out;
}

const FourierCurve& PatternManifold::curve() const {
    require(cache != nullptr, "manifold: not initialized");
    return cache->curve;
}

void PatternManifold::validate() const {
    require(period_or_length > 0.0 && std::isfinite(period_or_length),
            "manifold: period or length must be positive");
    require(std::isfinite(phase_velocity), "manifold: phase velocity must be finite");
    if (kind == ManifoldKind::wave_translates) {
        require(grid.has_value(), "wave manifold: grid required");
        require(reference.size() == grid->size(), "wave manifold: profile size mismatch");
        double lo = *std::min_element(reference.begin(), reference.end());
        double hi = *std::max_element(reference.begin(), reference.end());
        require(hi > lo, "wave manifold: reference profile must be nonconstant");
        return;
    }
    std::size_t np = table.size();
    require(np >= 4 && (np & (np - 1)) == 0, "cycle manifold: n_phase must be a power of two");
    double scale = 0.0, max_step = 0.0;
    for (std::size_t i = 0; i < np; ++i) {
        require(table[i].size() == dim, "cycle manifold: ragged table");
        for (double v : table[i]) {
            require(std::isfinite(v), "cycle manifold: non-finite entry");
        }
        scale = std::max(scale, sup_norm(table[i]));
        max_step = std::max(max_step, sup_distance(table[i], table[(i + 1) % np]));
    }
    // Closure: the wrap-around step must look like any other step.
    double closing = sup_distance(table[np - 1], table[0]);
    double typical = 0.0;
    for (std::size_t i = 0; i + 1 < np; ++i) {
        typical = std::max(typical, sup_distance(table[i], table[i + 1]));
    }
    require(closing <= 2.0 * typical + 1e-12 * std::max(scale, 1.0),
            "cycle manifold: table does not close (gamma_0 != gamma_T)");
}

void TubeSpec::validate() const {
    require(delta > 0.0 && std::isfinite(delta), "tube: delta must be positive");
    require(delta < validity_radius, "tube: delta exceeds the configured validity radius");
    manifold.validate();
}

TubeDistance tube_distance(std::span<const double> x, const TubeSpec& tube) {
    check_dimension(x, tube.manifold);
    if (tube.manifold.kind == ManifoldKind::wave_translates) {
        return wave_distance(x, tube);
    }
    return cycle_distance(x, tube);
}

TubeDistance tube_distance(const Field& x, const TubeSpec& tube) {
    if (tube.manifold.grid) {
        require_same_grid(x.grid, *tube.manifold.grid);
    }
    return tube_distance(std::span<const double>(x.values), tube);
}

TubeDistance coarse_distance(std::span<const double> x, const TubeSpec& tube) {
    check_dimension(x, tube.manifold);
    if (tube.manifold.kind == ManifoldKind::wave_translates) {
        WaveCoarse c = wave_coarse(x, tube);
        return {c.dist, static_cast<double>(c.shift) * tube.manifold.grid->dx()};
    }
    CycleCoarse c = cycle_coarse(x, tube);
    return {c.dist, static_cast<double>(c.index) * tube.manifold.period_or_length /
                        static_cast<double>(tube.manifold.table.size())};
}

bool is_inside(std::span<const double> x, const TubeSpec& tube) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            return false;
        }
    }
    if (coarse_distance(x, tube).dist < tube.delta) {
        return true;
    }
    return tube_distance(x, tube).dist < tube.delta;
}

bool is_inside(const Field& x, const TubeSpec& tube) {
    if (tube.manifold.grid) {
        require_same_grid(x.grid, *tube.manifold.grid);
    }
    return is_inside(std::span<const double>(x.values), tube);
}

std::string_view to_string(ExitReason r) noexcept {
    switch (r) {
        case ExitReason::none: return "none";
        case ExitReason::left_tube: return "left_tube";
        case ExitReason::overflow: return "overflow";
    }
    return "none";
}

KilledPath run_killed(std::span<const double> x0, const Dynamics& dyn, const TubeSpec& tube,
                      const KilledRunOptions& opts) {
    require(x0.size() == dyn.dimension(), "run_killed: initial state dimension mismatch");
    require(opts.t_max >= 0.0, "run_killed: t_max must be non-negative");
    require(opts.snapshot_stride >= 1, "run_killed: snapshot stride must be >= 1");
    require(is_inside(x0, tube), "run_killed: initial state lies outside the tube");
    const double dt = dyn.time_step();
    const auto n_steps = static_cast<std::uint64_t>(std::floor(opts.t_max / dt + 1e-9));
    KilledPath path;
    std::vector<double> x(x0.begin(), x0.end());
    auto record = [&](double t) {
        if (opts.max_snapshots == 0 || path.snapshots.size() < opts.max_snapshots) {
            path.times.push_back(t);
            path.snapshots.push_back(x);
        }
    };
    record(0.0);
    for (std::uint64_t step = 0; step < n_steps; ++step) {
        CounterStream noise(opts.seed, opts.path_id, step);
        double t = static_cast<double>(step + 1) * dt;
        try {
            dyn.step(x, noise);
        } catch (const Error& e) {
            if (e.kind() != ErrorKind::non_finite) {
                throw;
            }
            path.tau = t;
            path.exited = true;
            path.reason = ExitReason::overflow;
            return path;
        }
        if (!is_inside(x, tube)) {
            path.tau = t;
            path.exited = true;
            path.reason = ExitReason::left_tube;
            path.times.push_back(t);
            path.snapshots.push_back(x);
            return path;
        }
        if ((step + 1) % opts.snapshot_stride == 0) {
            record(t);
        }
    }
    return path;
}

KilledPath run_killed(const Field& x0, const ModelSpec& spec, const TubeSpec& tube, double t_max,
                      double dt, std::uint64_t seed, std::uint64_t path_id, std::size_t snapshot_stride) {
    SpdeDynamics dyn(spec, dt);
    require_same_grid(x0.grid, spec.grid);
    KilledRunOptions opts;
    opts.t_max = t_max;
    opts.seed = seed;
    opts.path_id = path_id;
    opts.snapshot_stride = snapshot_stride;
    return run_killed(x0.values, dyn, tube, opts);
}

PatternManifold build_wave_manifold(const Field& initial, const SpdeDynamics& dyn, double t_relax,
                                    double t_measure) {
    require(t_relax >= 0.0 && t_measure > 0.0, "wave manifold: relax and measure times must be positive");
    std::vector<double> x = initial.values;
    dyn.evolve(x, t_relax);
    Field profile(initial.grid, x);
    PatternManifold provisional = PatternManifold::wave(profile, 0.0);
    TubeSpec probe{1.0, provisional, DistanceNorm::l2};
    const double L = initial.grid.length;
    const double dt = dyn.time_step();
    // Track the best L2 shift at a cadence fine enough to unwrap.
    std::size_t chunks = std::max<std::size_t>(20, static_cast<std::size_t>(t_measure / (50.0 * dt)));
    double chunk = t_measure / static_cast<double>(chunks);
    std::vector<double> times{0.0}, shifts{0.0};
    double unwrapped = 0.0, last = 0.0;
    for (std::size_t i = 1; i <= chunks; ++i) {
        dyn.evolve(x, chunk);
        double s = tube_distance(x, probe).phase;
        double step = s - last;
        step -= L * std::round(step / L);
        unwrapped += step;
        last = s;
        times.push_back(static_cast<double>(i) * chunk);
        shifts.push_back(unwrapped);
    }
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    double nn = static_cast<double>(times.size());
    for (std::size_t i = 0; i < times.size(); ++i) {
        sx += times[i];
        sy += shifts[i];
        sxx += times[i] * times[i];
        sxy += times[i] * shifts[i];
    }
    double speed = (nn * sxy - sx * sy) / (nn * sxx - sx * sx);
    return PatternManifold::wave(profile, speed);
}

PatternManifold build_cycle_manifold(std::span<const double> x0, const Dynamics& dyn, double t_relax,
                                     double period_guess, std::size_t n_phase, std::size_t section_coord) {
    require(period_guess > 0.0, "cycle manifold: period guess must be positive");
    require(section_coord < dyn.dimension(), "cycle manifold: section coordinate out of range");
    std::vector<double> x(x0.begin(), x0.end());
    dyn.evolve(x, t_relax);
    const double h = period_guess / 256.0;
    // Orbit mean of the section coordinate over one guessed period.
    double mean = 0.0;
    {
        std::vector<double> y = x;
        for (int i = 0; i < 256; ++i) {
            dyn.evolve(y, h);
            mean += y[section_coord] / 256.0;
        }
    }
    auto find_crossing = [&](std::vector<double>& state, double& elapsed) {
        // Advance until the coordinate crosses the mean upward; bisect in time.
        for (int guard = 0; guard < 256 * 8; ++guard) {
            std::vector<double> next = state;
            dyn.evolve(next, h);
            double a = state[section_coord] - mean;
            double b = next[section_coord] - mean;
            if (a < 0.0 && b >= 0.0) {
                double lo = 0.0, hi = h;
                for (int it = 0; it < 60; ++it) {
                    double mid = 0.5 * (lo + hi);
                    std::vector<double> probe = state;
                    dyn.evolve(probe, mid);
                    if (probe[section_coord] - mean < 0.0) {
                        lo = mid;
                    } else {
                        hi = mid;
                    }
                }
                dyn.evolve(state, hi);
                elapsed += hi;
                return;
            }
            state = std::move(next);
            elapsed += h;
        }
        fail(ErrorKind::not_converged, "cycle manifold: no section crossing found");
    };
    double elapsed = 0.0;
    find_crossing(x, elapsed);
    std::vector<double> start = x;
    // Average two consecutive return times.
    double t1 = 0.0;
    dyn.evolve(x, 0.5 * period_guess);
    t1 += 0.5 * period_guess;
    find_crossing(x, t1);
    double t2 = 0.0;
    std::vector<double> y = x;
    dyn.evolve(y, 0.5 * period_guess);
    t2 += 0.5 * period_guess;
    find_crossing(y, t2);
    double period = 0.5 * (t1 + t2);

    std::vector<std::vector<double>> table(n_phase);
    std::vector<double> z = start;
    double dphi = period / static_cast<double>(n_phase);
    for (std::size_t i = 0; i < n_phase; ++i) {
        table[i] = z;
        // Each row from the start point keeps errors from accumulating across rows.
        z = start;
        dyn.evolve(z, static_cast<double>(i + 1) * dphi);
    }
    return PatternManifold::cycle(std::move(table), period, std::nullopt);
}

double tube_kappa(const ModelSpec& spec, const TubeSpec& tube, std::size_t n_samples) {
    const auto& m = tube.manifold;
    require(m.grid.has_value(), "tube_kappa: field-valued manifold required");
    require_same_grid(*m.grid, spec.grid);
    const std::size_t nc = spec.grid.n_comp;
    std::vector<double> u(nc), jac(nc * nc);
    double kappa = 0.0;
    for (std::size_t s = 0; s < n_samples; ++s) {
        double phase = m.period_or_length * static_cast<double>(s) / static_cast<double>(n_samples);
        std::vector<double> p = m.point(phase);
        for (std::size_t j = 0; j < spec.grid.n_grid; ++j) {
            for (std::size_t corner = 0; corner < (std::size_t{1} << nc); ++corner) {
                for (std::size_t c = 0; c < nc; ++c) {
                    double sign = (corner >> c) & 1u ? 1.0 : -1.0;
                    u[c] = p[c * spec.grid.n_grid + j] + sign * tube.delta;
                }
                spec.reaction.jacobian(u, jac);
                for (std::size_t c = 0; c < nc; ++c) {
                    double row = 0.0;
                    for (std::size_t i = 0; i < nc; ++i) row += std::abs(jac[c * nc + i]);
                    kappa = std::max(kappa, row);
                }
            }
        }
    }
    return kappa;
}

void write_manifold_csv(std::ostream& os, const PatternManifold& m) {
    Grid g = m.grid.value_or(Grid{m.dim, 0, 1.0, Boundary::periodic});
    os.precision(17);
    os << "# " << (m.kind == ManifoldKind::wave_translates ? "wave_translates" : "limit_cycle") << ' '
       << g.n_comp << ' ' << g.n_grid << ' ' << g.length << ' '
       << (g.boundary == Boundary::periodic ? "periodic" : "dirichlet") << ' ' << m.period_or_length << ' '
       << m.phase_velocity << '\n';
    auto write_row = [&](const std::vector<double>& row) {
        for (std::size_t i = 0; i < row.size(); ++i) {
            os << (i ? "," : "") << row[i];
        }
        os << '\n';
    };
    if (m.kind == ManifoldKind::wave_translates) {
        write_row(m.reference);
    } else {
        for (const auto& row : m.table) write_row(row);
    }
}

PatternManifold read_manifold_csv(std::istream& is) {
    std::string line;
    if (!std::getline(is, line) || line.rfind("# ", 0) != 0) {
        fail(ErrorKind::parse_error, "manifold csv: missing header line");
    }
    std::istringstream hs(line.substr(2));
    std::string kind, boundary;
    Grid g;
    double period = 0.0, velocity = 0.0;
    if (!(hs >> kind >> g.n_comp >> g.n_grid >> g.length >> boundary >> period >> velocity)) {
        fail(ErrorKind::parse_error, "manifold csv: malformed header");
    }
    g.boundary = boundary == "dirichlet" ? Boundary::dirichlet : Boundary::periodic;
    std::vector<std::vector<double>> rows;
    std::size_t lineno = 1;
    while (std::getline(is, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> row;
        std::istringstream ls(line);
        std::string cell;
        while (std::getline(ls, cell, ',')) {
            try {
                row.push_back(std::stod(cell));
            } catch (const std::exception&) {
                fail(ErrorKind::parse_error, "manifold csv: bad number on line " + std::to_string(lineno));
            }
        }
        rows.push_back(std::move(row));
    }
    if (rows.empty()) fail(ErrorKind::parse_error, "manifold csv: no data rows");
    if (kind == "wave_translates") {
        return PatternManifold::wave(Field(g, rows[0]), velocity);
    }
    if (kind != "limit_cycle") fail(ErrorKind::parse_error, "manifold csv: unknown kind " + kind);
    PatternManifold m = PatternManifold::cycle(std::move(rows), period,
                                               g.n_grid > 0 ? std::optional<Grid>(g) : std::nullopt);
    m.phase_velocity = velocity;
    return m;
}

void write_manifold_binary(std::ostream& os, const PatternManifold& m) {
    Grid g = m.grid.value_or(Grid{m.dim, 0, 1.0, Boundary::periodic});
    os.write("QPMANIF1", 8);
    bool wave = m.kind == ManifoldKind::wave_translates;
    write_u32(os, wave ? 0u : 1u);
    write_u32(os, static_cast<std::uint32_t>(g.n_comp));
    write_u32(os, static_cast<std::uint32_t>(g.n_grid));
    write_u32(os, static_cast<std::uint32_t>(wave ? 1 : m.table.size()));
    write_f64(os, g.length);
    write_f64(os, m.period_or_length);
    write_f64(os, m.phase_velocity);
    write_u32(os, g.boundary == Boundary::periodic ? 0u : 1u);
    write_u32(os, static_cast<std::uint32_t>(m.dim));
    if (wave) {
        for (double v : m.reference) write_f64(os, v);
    } else {
        for (const auto& row : m.table)
            for (double v : row) write_f64(os, v);
    }
}

PatternManifold read_manifold_binary(std::istream& is) {
    char magic[8];
    if (!is.read(magic, 8) || std::memcmp(magic, "QPMANIF1", 8) != 0) {
        fail(ErrorKind::parse_error, "manifold binary: bad magic");
    }
    std::uint32_t kind = read_u32(is);
    Grid g;
    g.n_comp = read_u32(is);
    g.n_grid = read_u32(is);
    std::uint32_t n_rows = read_u32(is);
    g.length = read_f64(is);
    double period = read_f64(is);
    double velocity = read_f64(is);
    g.boundary = read_u32(is) == 0 ? Boundary::periodic : Boundary::dirichlet;
    std::uint32_t dim = read_u32(is);
    std::vector<std::vector<double>> rows(n_rows, std::vector<double>(dim));
    for (auto& row : rows)
        for (double& v : row) v = read_f64(is);
    if (kind == 0) {
        return PatternManifold::wave(Field(g, rows.at(0)), velocity);
    }
    PatternManifold m = PatternManifold::cycle(std::move(rows), period,
                                               g.n_grid > 0 ? std::optional<Grid>(g) : std::nullopt);
    m.phase_velocity = velocity;
    return m;
}

}  // namespace qpattern
