#include "qpattern/spde.hpp"

#include <cmath>

#include "qpattern/error.hpp"

namespace qpattern {

namespace {

struct Scratch {
    std::vector<double> state_modes;
    std::vector<double> reaction_grid;
    std::vector<double> reaction_modes;
    std::vector<double> point_in;
    std::vector<double> point_out;
};

Scratch& scratch() {
    thread_local Scratch s;
    return s;
}

void evaluate_reaction(const ModelSpec& spec, const Field& x, std::vector<double>& out,
                       std::vector<double>& u, std::vector<double>& r) {
    const std::size_t nc = spec.grid.n_comp;
    const std::size_t n = spec.grid.n_grid;
    out.resize(nc * n);
    u.resize(nc);
    r.resize(nc);
    for (std::size_t j = 0; j < n; ++j) {
        for (std::size_t c = 0; c < nc; ++c) {
            u[c] = x.values[c * n + j];
        }
        spec.reaction.evaluate(u, r);
        for (std::size_t c = 0; c < nc; ++c) {
            if (!std::isfinite(r[c])) {
                fail(ErrorKind::non_finite, "reaction term overflowed at grid point " + std::to_string(j));
            }
            out[c * n + j] = r[c];
        }
    }
}

}  // namespace

SpectralStepper::SpectralStepper(ModelSpec spec, double dt)
    : spec_(std::move(spec)), dt_(dt), transform_(spec_.grid) {
    spec_.validate();
    require(dt > 0.0 && std::isfinite(dt), "stepper: dt must be positive");
    const std::size_t nc = spec_.grid.n_comp;
    const std::size_t nm = spec_.grid.n_modes();
    decay_ = semigroup_factor(spec_, dt);
    noise_std_.resize(nc * nm);
    keep_reaction_.resize(nm);
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t m = 0; m < nm; ++m) {
            noise_std_[c * nm + m] = std::sqrt(ou_increment_variance(spec_, c, m, dt));
        }
    }
    // 2/3 rule: keep harmonics k with 3k <= n (periodic) or 3k <= 2n (sine basis).
    const std::size_t n = spec_.grid.n_grid;
    std::size_t k_max = spec_.grid.boundary == Boundary::periodic ? n / 3 : 2 * n / 3;
    for (std::size_t m = 0; m < nm; ++m) {
        bool nyquist = spec_.grid.boundary == Boundary::periodic && m == nm - 1;
        keep_reaction_[m] = !spec_.dealias || (!nyquist && spec_.grid.harmonic(m) <= k_max);
    }
}

void SpectralStepper::advance(Field& x, CounterStream* noise, double reaction_scale) const {
    advance_impl(x, noise, {}, reaction_scale);
}

void SpectralStepper::advance_with_normals(Field& x, std::span<const double> normals) const {
    require(normals.size() == n_noise(), "stepper: one normal per mode required");
    advance_impl(x, nullptr, normals, 1.0);
}

void SpectralStepper::advance_impl(Field& x, CounterStream* noise, std::span<const double> normals,
                                   double reaction_scale) const {
    require_same_grid(x.grid, spec_.grid);
    const std::size_t nc = spec_.grid.n_comp;
    const std::size_t nm = spec_.grid.n_modes();
    auto& s = scratch();
    s.state_modes.resize(nc * nm);
    for (std::size_t c = 0; c < nc; ++c) {
        transform_.to_modes(x.component(c), std::span<double>(s.state_modes.data() + c * nm, nm));
    }
    bool has_reaction = !spec_.reaction.is_zero() && reaction_scale != 0.0;
    if (has_reaction) {
        evaluate_reaction(spec_, x, s.reaction_grid, s.point_in, s.point_out);
        s.reaction_modes.resize(nc * nm);
        for (std::size_t c = 0; c < nc; ++c) {
            std::span<double> out(s.reaction_modes.data() + c * nm, nm);
            transform_.to_modes(std::span<const double>(s.reaction_grid.data() + c * spec_.grid.n_grid,
                                                        spec_.grid.n_grid),
                                out);
            for (std::size_t m = 0; m < nm; ++m) {
                if (!keep_reaction_[m]) {
                    out[m] = 0.0;
                }
            }
        }
        double h = dt_ * reaction_scale;
        for (std::size_t i = 0; i < nc * nm; ++i) {
            s.state_modes[i] = decay_[i] * (s.state_modes[i] + h * s.reaction_modes[i]);
        }
    } else {
        for (std::size_t i = 0; i < nc * nm; ++i) {
            s.state_modes[i] *= decay_[i];
        }
    }
    if (!normals.empty()) {
        for (std::size_t i = 0; i < nc * nm; ++i) {
            s.state_modes[i] += noise_std_[i] * normals[i];
        }
    } else if (noise != nullptr && spec_.sigma > 0.0) {
        for (std::size_t i = 0; i < nc * nm; ++i) {
            s.state_modes[i] += noise_std_[i] * noise->normal();
        }
    }
    for (std::size_t c = 0; c < nc; ++c) {
        transform_.to_grid(std::span<const double>(s.state_modes.data() + c * nm, nm), x.component(c));
    }
    for (double v : x.values) {
        if (!std::isfinite(v)) {
            fail(ErrorKind::non_finite, "state became non-finite");
        }
    }
}

Field SpectralStepper::step(const Field& x, CounterStream& noise) const {
    Field out = x;
    advance(out, &noise);
    return out;
}

Field SpectralStepper::step_deterministic(const Field& x) const {
    Field out = x;
    advance(out, nullptr);
    return out;
}

std::vector<double> SpectralStepper::reaction_modes(const Field& x) const {
    require_same_grid(x.grid, spec_.grid);
    const std::size_t nc = spec_.grid.n_comp;
    const std::size_t nm = spec_.grid.n_modes();
    std::vector<double> grid_vals, u, r;
    evaluate_reaction(spec_, x, grid_vals, u, r);
    std::vector<double> out(nc * nm);
    for (std::size_t c = 0; c < nc; ++c) {
        std::span<double> dst(out.data() + c * nm, nm);
        transform_.to_modes(std::span<const double>(grid_vals.data() + c * spec_.grid.n_grid,
                                                    spec_.grid.n_grid),
                            dst);
        for (std::size_t m = 0; m < nm; ++m) {
            if (!keep_reaction_[m]) {
                dst[m] = 0.0;
            }
        }
    }
    return out;
}

Field SpectralStepper::drift(const Field& x) const {
    const std::size_t nc = spec_.grid.n_comp;
    const std::size_t nm = spec_.grid.n_modes();
    std::vector<double> modes = transform_.forward(x);
    std::vector<double> react = reaction_modes(x);
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t m = 0; m < nm; ++m) {
            std::size_t i = c * nm + m;
            modes[i] = -spec_.lambda(c, m) * modes[i] + react[i];
        }
    }
    return transform_.inverse(modes);
}

std::vector<double> semigroup_factor(const ModelSpec& spec, double dt) {
    require(dt > 0.0, "semigroup_factor: dt must be positive");
    const std::size_t nc = spec.grid.n_comp;
    const std::size_t nm = spec.grid.n_modes();
    std::vector<double> out(nc * nm);
    for (std::size_t c = 0; c < nc; ++c) {
        for (std::size_t m = 0; m < nm; ++m) {
            out[c * nm + m] = std::exp(-spec.lambda(c, m) * dt);
        }
    }
    return out;
}

Field step_mild(const Field& x, const ModelSpec& spec, double dt, CounterStream& noise) {
    SpectralStepper stepper(spec, dt);
    return stepper.step(x, noise);
}

Field evolve_deterministic(const Field& x, const ModelSpec& spec, double t, double dt) {
    require(t >= 0.0, "evolve: t must be non-negative");
    require(dt > 0.0, "evolve: dt must be positive");
    Field out = x;
    if (t == 0.0) {
        return out;
    }
    // Round near-integer ratios so that evolve(s) then evolve(t) matches evolve(s + t).
    double ratio = t / dt;
    auto full = static_cast<std::size_t>(std::floor(ratio + 1e-9));
    double remainder = t - static_cast<double>(full) * dt;
    SpectralStepper stepper(spec, dt);
    for (std::size_t i = 0; i < full; ++i) {
        stepper.advance(out, nullptr);
    }
    if (remainder > 1e-9 * dt) {
        SpectralStepper tail(spec, remainder);
        tail.advance(out, nullptr);
    }
    return out;
}

double ou_increment_variance(const ModelSpec& spec, std::size_t comp, std::size_t mode, double dt) {
    double lam = spec.lambda(comp, mode);
    double b = spec.b(comp, mode);
    double s2b2 = spec.sigma * spec.sigma * b * b;
    if (lam == 0.0) {
        return s2b2 * dt;
    }
    return s2b2 * (-std::expm1(-2.0 * lam * dt)) / (2.0 * lam);
}

double ou_stationary_variance(const ModelSpec& spec, std::size_t comp, std::size_t mode) {
    double lam = spec.lambda(comp, mode);
    if (lam <= 0.0) {
        fail(ErrorKind::zero_mode, "stationary variance undefined for a non-decaying mode");
    }
    double b = spec.b(comp, mode);
    return spec.sigma * spec.sigma * b * b / (2.0 * lam);
}

}  // namespace qpattern
