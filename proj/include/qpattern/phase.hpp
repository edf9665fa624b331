#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "qpattern/dynamics.hpp"
#include "qpattern/ensemble.hpp"
#include "qpattern/polynomial.hpp"
#include "qpattern/tube.hpp"

namespace qpattern {

struct IsochronOptions {
    /// Initial relax horizon; 0 means five contraction times of the dynamics.
    double relax_time = 0.0;
    /// Relax horizon doubles until probe phases move by less than this
    /// fraction of the period.
    double cauchy_tol = 1e-6;
    std::size_t max_doublings = 8;
    /// Largest L2 distance from the relaxed state to the manifold, relative to
    /// the manifold scale; beyond it the state is outside the basin.
    double match_tol = 1e-2;
    /// Finite-difference step relative to the manifold sup-norm scale.
    double fd_step = 1e-4;
    /// Noise directions used in derivative sums; 0 keeps all of them.
    std::size_t n_directions = 0;
    std::size_t n_probes = 8;
    /// Probe offsets from the manifold, relative to the manifold scale.
    double probe_radius = 0.05;
    unsigned workers = 1;
};

/// Asymptotic-phase map: relax under the deterministic flow, match the
/// nearest manifold point on a smooth parametrization, pull back by the
/// relax horizon. Phases live in [0, period) and advance at phase_velocity
/// under the flow (time for cycles, spatial shift for waves).
class IsochronMap {
public:
    IsochronMap(const PatternManifold& manifold, const Dynamics& dyn, double relax_time,
                const IsochronOptions& opts);

    double phase_of(std::span<const double> x) const;

    struct Local {
        double phase = 0.0;
        /// D pi(x) V(x).
        double drift_term = 0.0;
        /// (1/2) sum_k D^2 pi(x)[B e_k, B e_k].
        double ito_term = 0.0;
        /// D pi(x) B e_k.
        std::vector<double> noise_gradient;
    };
    /// Central differences along V and the retained noise directions.
    /// Throws StencilOverflow when a probed state leaves the basin.
    Local local(std::span<const double> x) const;
    /// D pi V + sigma^2 (1/2) sum_k D^2 pi[B e_k, B e_k]: the phase drift.
    double drift_integrand(std::span<const double> x) const;

    /// |phase_of(phi_s x) - phase_of(x) - s * phase_velocity| wrapped to the period.
    double equivariance_error(std::span<const double> x, double s) const;

    const PatternManifold& manifold() const noexcept { return *manifold_; }
    const Dynamics& dynamics() const noexcept { return *dyn_; }
    double relax_time() const noexcept { return relax_time_; }
    double period() const noexcept { return manifold_->period_or_length; }
    double phase_velocity() const noexcept { return manifold_->phase_velocity; }
    /// Deterministic frequency c_0 in cycles per unit time.
    double frequency() const noexcept { return manifold_->frequency(); }
    double scale() const noexcept { return scale_; }
    std::size_t n_directions() const noexcept { return n_dir_; }
    /// Largest equivariance error seen over the probes at build time.
    double build_equivariance_error() const noexcept { return build_equivariance_; }

private:
    friend IsochronMap build_isochron(const PatternManifold&, const Dynamics&, const IsochronOptions&);
    double match(std::span<const double> relaxed) const;
    double wrap_diff(double d) const;

    const PatternManifold* manifold_;
    const Dynamics* dyn_;
    double relax_time_;
    IsochronOptions opts_;
    TubeSpec match_tube_;
    double scale_ = 1.0;
    std::size_t n_dir_ = 0;
    double build_equivariance_ = 0.0;
};

/// Chooses the relax horizon by doubling until the probe phases settle,
/// then checks equivariance over s in (0, 2 * period / phase_velocity].
/// Throws NotConverged when either fails.
IsochronMap build_isochron(const PatternManifold& manifold, const Dynamics& dyn, const IsochronOptions& opts = {});

struct PhaseSeries {
    std::vector<double> times;
    std::vector<double> unwrapped_phase;
    double survived_to = 0.0;
    /// Consecutive snapshots whose wrapped phase moved by half a period or more.
    std::size_t jump_warnings = 0;
};

/// Phases of the snapshots strictly before tau, unwrapped by nearest branch.
PhaseSeries phase_series(const KilledPath& path, const IsochronMap& iso);

struct ItoCheck {
    double delta_phase = 0.0;
    double drift_integral = 0.0;
    /// Cumulative residual pi(X_t) - pi(X_0) - drift integral at each snapshot.
    std::vector<double> residual;
    double qv_empirical = 0.0;
    double qv_predicted = 0.0;
};

/// Left-point sums over consecutive snapshots before tau.
ItoCheck ito_residual_check(const KilledPath& path, const IsochronMap& iso);

/// Unwrapped phase and phase-drift integrand as Fleming-Viot observables.
std::vector<Observable<std::vector<double>>> phase_observables(const IsochronMap& iso);

struct FrequencyEstimate {
    double c0 = 0.0;
    /// Mean phase slope along the conditioned lineages, in cycles per time.
    double slope = 0.0;
    double slope_se = 0.0;
    /// Lineage time average of the phase drift integrand, in cycles per time.
    double beta_integral = 0.0;
    double beta_integral_se = 0.0;
    double window_start = 0.0;
    double window_end = 0.0;
    /// |slope - beta_integral| over the combined standard error.
    double z_agreement = 0.0;
};

/// Both quasi-asymptotic frequency estimators from one timeline.
FrequencyEstimate quasi_asymptotic_frequency(const FvTimeline& tl, std::size_t phase_obs,
                                             std::size_t integrand_obs, double period, double c0,
                                             double burn_in, double end_exclusion);

struct SweepPoint {
    double sigma = 0.0;
    double c = 0.0;
    double std_error = 0.0;
    std::string estimator = "slope";
};

struct SweepRow {
    double sigma = 0.0;
    double c = 0.0;
    double std_error = 0.0;
    std::string estimator;
    double shift = 0.0;
    double shift_se = 0.0;
    /// (c - c0) / sigma^2; NaN at sigma = 0.
    double quad_coeff = 0.0;
    double quad_coeff_se = 0.0;
    /// c - (c0_hat + q sigma^2).
    double departure = 0.0;
};

struct FrequencyDecomposition {
    double c0_hat = 0.0;
    double c0_hat_se = 0.0;
    double c0_measured = 0.0;
    double quad_coeff = 0.0;
    double quad_coeff_se = 0.0;
    /// Slope of (c - c0) / sigma^2 against sigma^2: the measured departure
    /// from a pure quadratic.
    double departure_slope = 0.0;
    double departure_slope_se = 0.0;
    std::vector<SweepRow> rows;
};

/// Fits c = c0 + q sigma^2 (weighted by 1 / se^2 when every row has an
/// error, unweighted otherwise). Rows come back sorted by sigma. Throws
/// InsufficientSweep with fewer than 4 distinct sigma values or no sigma = 0.
FrequencyDecomposition frequency_decomposition(std::vector<SweepPoint> sweep);

/// Planar normal form r' = r (1 - r^2), theta' = omega + beta r^2 (1 - r^2).
/// The unit circle is the cycle (period 2 pi / omega) and the isochrons are
/// the curves theta - beta (r^2 - 1) / 2 = const.
Polynomial radial_twist_drift(double omega, double beta);
/// Closed-form asymptotic phase in [0, 2 pi / omega), zero on the positive x axis.
double radial_twist_phase(std::span<const double> x, double omega, double beta);
/// The cycle tabulated at n points, row 0 at angle 0.
PatternManifold radial_twist_manifold(double omega, std::size_t n = 512);

}  // namespace qpattern
