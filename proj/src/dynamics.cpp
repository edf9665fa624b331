#include "qpattern/dynamics.hpp"

#include <cmath>

#include "qpattern/error.hpp"

namespace qpattern {

namespace {

Field& field_scratch(const Grid& grid) {
    thread_local Field f;
    if (!(f.grid == grid) || f.values.size() != grid.size()) {
        f = Field(grid);
    }
    return f;
}

void check_finite(std::span<const double> x) {
    for (double v : x) {
        if (!std::isfinite(v)) {
            fail(ErrorKind::non_finite, "state became non-finite");
        }
    }
}

}  // namespace

SpdeDynamics::SpdeDynamics(const ModelSpec& spec, double dt) : stepper_(spec, dt) {}

void SpdeDynamics::step(std::span<double> x, CounterStream& noise) const {
    Field& f = field_scratch(grid());
    std::copy(x.begin(), x.end(), f.values.begin());
    stepper_.advance(f, &noise);
    std::copy(f.values.begin(), f.values.end(), x.begin());
}

void SpdeDynamics::evolve(std::span<double> x, double t) const {
    require(t >= 0.0, "evolve: t must be non-negative");
    Field& f = field_scratch(grid());
    std::copy(x.begin(), x.end(), f.values.begin());
    double dt = stepper_.dt();
    auto full = static_cast<std::size_t>(std::floor(t / dt + 1e-9));
    for (std::size_t i = 0; i < full; ++i) {
        stepper_.advance(f, nullptr);
    }
    double remainder = t - static_cast<double>(full) * dt;
    if (remainder > 1e-9 * dt) {
        SpectralStepper tail(stepper_.spec(), remainder);
        tail.advance(f, nullptr);
    }
    std::copy(f.values.begin(), f.values.end(), x.begin());
}

void SpdeDynamics::drift(std::span<const double> x, std::span<double> out) const {
    Field f(grid(), std::vector<double>(x.begin(), x.end()));
    Field v = stepper_.drift(f);
    std::copy(v.values.begin(), v.values.end(), out.begin());
}

void SpdeDynamics::noise_direction(std::size_t k, std::span<double> out) const {
    require(k < noise_rank(), "noise direction index out of range");
    const std::size_t nm = grid().n_modes();
    std::size_t c = k / nm;
    std::size_t m = k % nm;
    std::vector<double> coeffs(nm, 0.0);
    coeffs[m] = stepper_.spec().b(c, m);
    std::fill(out.begin(), out.end(), 0.0);
    stepper_.transform().to_grid(coeffs, out.subspan(c * grid().n_grid, grid().n_grid));
}

double SpdeDynamics::contraction_time() const {
    double w = stepper_.spec().omega();
    return w > 0.0 ? 1.0 / w : 1.0;
}

double SpdeDynamics::cutoff_weight(double dist, double inner, double outer) noexcept {
    if (dist <= inner) {
        return 1.0;
    }
    if (dist >= outer) {
        return 0.0;
    }
    // C^1 smoothstep between the two radii.
    double s = (dist - inner) / (outer - inner);
    return 1.0 - s * s * (3.0 - 2.0 * s);
}

PolynomialSde::PolynomialSde(Polynomial drift, std::vector<double> noise, double sigma, double dt,
                             double det_dt, double contraction_time)
    : drift_(std::move(drift)),
      noise_(std::move(noise)),
      sigma_(sigma),
      dt_(dt),
      det_dt_(det_dt),
      contraction_time_(contraction_time) {
    std::size_t d = drift_.n_comp();
    require(d >= 1, "sde: dimension must be at least 1");
    require(noise_.size() == 1 || noise_.size() == d * d, "sde: noise needs 1 or D*D entries");
    require(sigma_ >= 0.0, "sde: sigma must be >= 0");
    require(dt_ > 0.0 && det_dt_ > 0.0, "sde: step sizes must be positive");
    require(contraction_time_ > 0.0, "sde: contraction time must be positive");
}

double PolynomialSde::noise_entry(std::size_t i, std::size_t k) const {
    if (noise_.size() == 1) {
        return i == k ? noise_[0] : 0.0;
    }
    return noise_[i * dimension() + k];
}

void PolynomialSde::drift(std::span<const double> x, std::span<double> out) const {
    drift_.evaluate(x, out);
}

// Additive noise: an RK4 drift step plus the Gaussian increment keeps strong
// order one, and sigma = 0 reproduces the deterministic flow step for step.
void PolynomialSde::step(std::span<double> x, CounterStream& noise) const {
    const std::size_t d = dimension();
    rk4(x, dt_);
    if (sigma_ > 0.0) {
        thread_local std::vector<double> xi;
        xi.resize(d);
        for (std::size_t k = 0; k < d; ++k) {
            xi[k] = noise.normal();
        }
        double amp = sigma_ * std::sqrt(dt_);
        for (std::size_t i = 0; i < d; ++i) {
            double s = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                s += noise_entry(i, k) * xi[k];
            }
            x[i] += amp * s;
        }
    }
    check_finite(x);
}

void PolynomialSde::rk4(std::span<double> x, double h) const {
    const std::size_t d = dimension();
    thread_local std::vector<double> k1, k2, k3, k4, tmp;
    k1.resize(d);
    k2.resize(d);
    k3.resize(d);
    k4.resize(d);
    tmp.resize(d);
    drift_.evaluate(x, k1);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    drift_.evaluate(tmp, k2);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    drift_.evaluate(tmp, k3);
    for (std::size_t i = 0; i < d; ++i) tmp[i] = x[i] + h * k3[i];
    drift_.evaluate(tmp, k4);
    for (std::size_t i = 0; i < d; ++i) {
        x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
    }
}

void PolynomialSde::evolve(std::span<double> x, double t) const {
    require(t >= 0.0, "evolve: t must be non-negative");
    auto full = static_cast<std::size_t>(std::floor(t / det_dt_ + 1e-9));
    for (std::size_t i = 0; i < full; ++i) {
        rk4(x, det_dt_);
    }
    double remainder = t - static_cast<double>(full) * det_dt_;
    if (remainder > 1e-9 * det_dt_) {
        rk4(x, remainder);
    }
    check_finite(x);
}

void PolynomialSde::noise_direction(std::size_t k, std::span<double> out) const {
    require(k < noise_rank(), "noise direction index out of range");
    for (std::size_t i = 0; i < dimension(); ++i) {
        out[i] = noise_entry(i, k);
    }
}

}  // namespace qpattern
