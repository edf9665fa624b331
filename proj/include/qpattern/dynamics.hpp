#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "qpattern/model.hpp"
#include "qpattern/polynomial.hpp"
#include "qpattern/rng.hpp"
#include "qpattern/spde.hpp"

namespace qpattern {

/// State-space view of a stochastic system dX = V(X) dt + sigma B dW shared by
/// the killed-run, ensemble and phase code. States are flat vectors.
class Dynamics {
public:
    virtual ~Dynamics() = default;

    virtual std::size_t dimension() const = 0;
    /// Stochastic step size.
    virtual double time_step() const = 0;
    virtual double sigma() const = 0;

    /// One stochastic step in place; throws NonFinite on overflow.
    virtual void step(std::span<double> x, CounterStream& noise) const = 0;
    /// Deterministic flow phi_t in place.
    virtual void evolve(std::span<double> x, double t) const = 0;
    /// V(x).
    virtual void drift(std::span<const double> x, std::span<double> out) const = 0;

    /// Number of noise directions B e_k.
    virtual std::size_t noise_rank() const = 0;
    /// B e_k in state coordinates, without the sigma factor.
    virtual void noise_direction(std::size_t k, std::span<double> out) const = 0;

    /// Inner product matching the state's L2 structure (dx-weighted for fields).
    virtual double inner_weight() const { return 1.0; }
    /// Transverse contraction e-folding time; seeds the isochron relax horizon.
    virtual double contraction_time() const = 0;
};

/// Stochastic reaction-diffusion system on a grid.
class SpdeDynamics final : public Dynamics {
public:
    SpdeDynamics(const ModelSpec& spec, double dt);

    const SpectralStepper& stepper() const noexcept { return stepper_; }
    const Grid& grid() const noexcept { return stepper_.grid(); }

    std::size_t dimension() const override { return grid().size(); }
    double time_step() const override { return stepper_.dt(); }
    double sigma() const override { return stepper_.spec().sigma; }
    void step(std::span<double> x, CounterStream& noise) const override;
    void evolve(std::span<double> x, double t) const override;
    void drift(std::span<const double> x, std::span<double> out) const override;
    std::size_t noise_rank() const override { return stepper_.n_noise(); }
    void noise_direction(std::size_t k, std::span<double> out) const override;
    double inner_weight() const override { return grid().dx(); }
    /// 1 / omega, or 1 when the linear part does not decay.
    double contraction_time() const override;

    /// Cutoff step: N is scaled by chi(dist), which is 1 inside radius `inner`
    /// and falls smoothly to 0 at `outer`.
    static double cutoff_weight(double dist, double inner, double outer) noexcept;

private:
    SpectralStepper stepper_;
};

/// Finite-dimensional SDE with polynomial drift and constant noise matrix.
///
/// Stochastic steps are an RK4 drift step of size dt plus the additive noise
/// increment; the deterministic flow uses RK4 with step det_dt.
class PolynomialSde final : public Dynamics {
public:
    /// noise is row-major D x D, or a single entry meaning noise * I.
    PolynomialSde(Polynomial drift, std::vector<double> noise, double sigma, double dt,
                  double det_dt, double contraction_time = 1.0);

    std::size_t dimension() const override { return drift_.n_comp(); }
    double time_step() const override { return dt_; }
    double sigma() const override { return sigma_; }
    void step(std::span<double> x, CounterStream& noise) const override;
    void evolve(std::span<double> x, double t) const override;
    void drift(std::span<const double> x, std::span<double> out) const override;
    std::size_t noise_rank() const override { return dimension(); }
    void noise_direction(std::size_t k, std::span<double> out) const override;
    double contraction_time() const override { return contraction_time_; }

    double deterministic_step() const noexcept { return det_dt_; }
    const Polynomial& polynomial() const noexcept { return drift_; }

private:
    void rk4(std::span<double> x, double h) const;
    double noise_entry(std::size_t i, std::size_t k) const;

    Polynomial drift_;
    std::vector<double> noise_;
    double sigma_;
    double dt_;
    double det_dt_;
    double contraction_time_;
};

}  // namespace qpattern
