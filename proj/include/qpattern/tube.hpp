#pragma once

#include <cstddef>
#include <iosfwd>
#include <limits>
#include <memory>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "qpattern/dynamics.hpp"
#include "qpattern/field.hpp"
#include "qpattern/fft.hpp"

namespace qpattern {

enum class ManifoldKind { wave_translates, limit_cycle };
enum class DistanceNorm { sup, l2 };

/// Smooth closed curve theta -> state, theta in [0, period), stored as a
/// truncated real Fourier series in theta (one coefficient vector per
/// harmonic). Used where the curve must be differentiated.
class FourierCurve {
public:
    FourierCurve() = default;
    /// samples[i] is the state at theta = i * period / n; n must be a power of two.
    FourierCurve(const std::vector<std::vector<double>>& samples, double period);

    double period() const noexcept { return period_; }
    std::size_t dimension() const noexcept { return dim_; }
    std::size_t harmonics() const noexcept { return cos_.size(); }

    /// Point, first and second theta-derivatives; derivative outputs may be empty.
    void evaluate(double theta, std::span<double> point, std::span<double> d1,
                  std::span<double> d2) const;

private:
    double period_ = 1.0;
    std::size_t dim_ = 0;
    std::vector<double> mean_;
    std::vector<std::vector<double>> cos_;
    std::vector<std::vector<double>> sin_;
};

/// The pattern manifold: all translates of a travelling-wave profile, or a
/// periodic orbit tabulated at n_phase equally spaced phases.
///
/// Phase coordinate: spatial shift in [0, L) for waves (advancing at
/// phase_velocity = wave speed), time in [0, T) for cycles (phase_velocity 1).
/// The deterministic frequency is phase_velocity / period_or_length.
struct PatternManifold {
    ManifoldKind kind = ManifoldKind::limit_cycle;
    /// Set for field-valued manifolds; n_grid = 0 marks plain R^D states.
    std::optional<Grid> grid;
    std::size_t dim = 0;
    /// Wave profile (kind == wave_translates).
    std::vector<double> reference;
    /// Row i is gamma at phase i * period / n_phase (kind == limit_cycle).
    std::vector<std::vector<double>> table;
    double period_or_length = 1.0;
    double phase_velocity = 1.0;

    static PatternManifold wave(const Field& profile, double speed);
    static PatternManifold cycle(std::vector<std::vector<double>> table, double period,
                                 std::optional<Grid> grid = std::nullopt);

    double frequency() const noexcept { return phase_velocity / period_or_length; }
    /// Weight of the squared-difference sum in the L2 norm (dx for fields).
    double l2_weight() const noexcept;
    /// State at a phase (Fourier shift for waves, linear interpolation for cycles).
    std::vector<double> point(double phase) const;
    /// Smooth parametrization used by the isochron map.
    const FourierCurve& curve() const;

    /// Checks non-constant profiles, finite entries and table closure.
    void validate() const;

    struct Cache;
    std::shared_ptr<const Cache> cache;
};

struct TubeSpec {
    double delta = 0.1;
    PatternManifold manifold;
    DistanceNorm norm = DistanceNorm::sup;
    /// Largest delta the configuration vouches for; delta must stay below it.
    double validity_radius = std::numeric_limits<double>::infinity();

    void validate() const;
};

struct TubeDistance {
    double dist = 0.0;
    /// Shift in [0, L) for waves, phase in [0, T) for cycles.
    double phase = 0.0;
};

/// Distance to the manifold and its argmin. Sup-norm searches the cross-
/// correlation peaks and refines the shift by golden section; ties resolve to
/// the smallest shift. Throws GridMismatch on a dimension mismatch.
TubeDistance tube_distance(std::span<const double> x, const TubeSpec& tube);
TubeDistance tube_distance(const Field& x, const TubeSpec& tube);

/// True iff tube_distance < delta; a tie counts as outside.
bool is_inside(std::span<const double> x, const TubeSpec& tube);
bool is_inside(const Field& x, const TubeSpec& tube);

/// Distance restricted to integer grid shifts (waves) or table phases (cycles):
/// an upper bound on tube_distance, used as a fast membership test.
TubeDistance coarse_distance(std::span<const double> x, const TubeSpec& tube);

enum class ExitReason { none, left_tube, overflow };

std::string_view to_string(ExitReason r) noexcept;

struct KilledPath {
    std::vector<double> times;
    std::vector<std::vector<double>> snapshots;
    /// +infinity when the path survived to t_max.
    double tau = std::numeric_limits<double>::infinity();
    bool exited = false;
    ExitReason reason = ExitReason::none;
};

struct KilledRunOptions {
    double t_max = 1.0;
    /// Record every stride-th step; the exit step is always recorded.
    std::size_t snapshot_stride = 1;
    std::uint64_t seed = 0;
    std::uint64_t path_id = 0;
    /// Inclusive upper bound on recorded snapshots (0 means no limit).
    std::size_t max_snapshots = 0;
};

/// Integrates the dynamics from x0 and kills the path on its first exit from
/// the tube (checked once per step). Overflow is a kill with reason overflow.
KilledPath run_killed(std::span<const double> x0, const Dynamics& dyn, const TubeSpec& tube,
                      const KilledRunOptions& opts);
KilledPath run_killed(const Field& x0, const ModelSpec& spec, const TubeSpec& tube, double t_max,
                      double dt, std::uint64_t seed, std::uint64_t path_id = 0,
                      std::size_t snapshot_stride = 1);

/// Relaxes an initial field under the deterministic flow for t_relax, then
/// measures the drift speed of the profile over t_measure by tracking the
/// best-matching shift.
PatternManifold build_wave_manifold(const Field& initial, const SpdeDynamics& dyn, double t_relax,
                                    double t_measure);

/// Relaxes x0 onto an attracting periodic orbit, locates the period from
/// successive upward crossings of coordinate `section_coord` through its
/// orbit mean, and tabulates n_phase points starting at a crossing.
PatternManifold build_cycle_manifold(std::span<const double> x0, const Dynamics& dyn,
                                     double t_relax, double period_guess,
                                     std::size_t n_phase = 512, std::size_t section_coord = 0);

/// Lipschitz bound of the reaction over the delta-tube: sup over manifold
/// samples with every entry perturbed by up to delta (corner sampling).
double tube_kappa(const ModelSpec& spec, const TubeSpec& tube, std::size_t n_samples = 64);

/// Text table: header line "# kind n_comp n_grid length boundary period velocity",
/// then one row per phase sample (a single row for waves), space separated.
void write_manifold_csv(std::ostream& os, const PatternManifold& m);
PatternManifold read_manifold_csv(std::istream& is);

/// Binary: 8-byte magic "QPMANIF1", then little-endian u32 kind, u32 n_comp,
/// u32 n_grid, u32 n_rows, f64 length, f64 period, f64 velocity, u32 boundary,
/// u32 dim, then n_rows * dim little-endian f64 values.
void write_manifold_binary(std::ostream& os, const PatternManifold& m);
PatternManifold read_manifold_binary(std::istream& is);

}  // namespace qpattern
