#pragma once

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstdint>
#include <functional>
#include <limits>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qpattern/chain.hpp"
#include "qpattern/dynamics.hpp"
#include "qpattern/error.hpp"
#include "qpattern/parallel.hpp"
#include "qpattern/rng.hpp"
#include "qpattern/stats.hpp"

namespace qpattern {

struct StepOutcome {
    bool alive = true;
    bool overflow = false;
};

/// A killed Markov process advanced one step at a time from a counter stream.
template <class P>
concept KilledProcess = requires(const P& p, typename P::State& s, CounterStream& rng) {
    { p.advance(s, rng) } -> std::same_as<StepOutcome>;
    { p.time_step() } -> std::convertible_to<double>;
};

/// Particles on the states of a sub-Markov matrix.
class ChainProcess {
public:
    using State = std::size_t;

    explicit ChainProcess(const SubMarkovMatrix& q);

    StepOutcome advance(State& s, CounterStream& rng) const;
    double time_step() const noexcept { return q_->dt_per_step; }
    const SubMarkovMatrix& matrix() const noexcept { return *q_; }

private:
    const SubMarkovMatrix* q_;
    std::vector<double> cumulative_;
};

/// Particles driven by a Dynamics and killed when `inside` turns false.
class DynamicsProcess {
public:
    using State = std::vector<double>;
    using Inside = std::function<bool(std::span<const double>)>;

    DynamicsProcess(const Dynamics& dyn, Inside inside) : dyn_(&dyn), inside_(std::move(inside)) {}

    StepOutcome advance(State& s, CounterStream& rng) const;
    double time_step() const noexcept { return dyn_->time_step(); }
    const Dynamics& dynamics() const noexcept { return *dyn_; }
    bool inside(std::span<const double> x) const { return inside_(x); }

private:
    const Dynamics* dyn_;
    Inside inside_;
};

/// A functional tracked along every particle and its ancestry. Phase
/// observables return a value in [0, period) and are unwrapped along lineages.
template <class State>
struct Observable {
    std::string name;
    std::function<double(const State&)> f;
    bool is_phase = false;
    double period = 1.0;
};

struct ResampleEvent {
    std::uint64_t step = 0;
    std::uint32_t dead = 0;
    std::uint32_t donor = 0;
};

struct FvOptions {
    std::size_t n_particles = 1000;
    std::size_t n_steps = 1000;
    std::uint64_t seed = 0;
    unsigned workers = 1;
    /// Observables are recorded every record_stride steps (and at step 0).
    std::size_t record_stride = 1;
    /// Resample events beyond this count are counted but not stored.
    std::size_t max_logged_events = 1'000'000;
};

/// Everything a Fleming-Viot run leaves behind for the estimators.
struct FvTimeline {
    double dt = 1.0;
    std::size_t n_particles = 0;
    std::size_t n_steps = 0;
    std::size_t record_stride = 1;
    std::vector<std::string> observable_names;
    /// Killed fraction at each step.
    std::vector<double> kill_fraction;
    std::vector<ResampleEvent> events;
    std::uint64_t total_events = 0;
    std::vector<double> record_times;
    /// cloud_mean[r][k]: ensemble mean of observable k at record r (phase
    /// observables use their wrapped value).
    std::vector<std::vector<double>> cloud_mean;
    /// lineage[i][r * n_obs + k]: observable k at record r along the ancestry
    /// of final particle i; phase observables are unwrapped.
    std::vector<std::vector<double>> lineage;
    /// lineage_slot[i][r]: slot occupied by the ancestor of particle i at record r.
    std::vector<std::vector<std::uint32_t>> lineage_slot;
    /// Jumps of more than half a period between records along any lineage.
    std::uint64_t phase_jump_warnings = 0;

    std::size_t n_observables() const noexcept { return observable_names.size(); }
    std::size_t n_records() const noexcept { return record_times.size(); }
};

/// Fleming-Viot particle system: all particles take one step (in parallel,
/// each from the stream (seed, slot, step)); then, serially and in slot order,
/// every killed particle is replaced by a copy of a survivor drawn uniformly
/// from the dedicated resampling stream of that step. Output depends only on
/// the seed, never on the worker count.
template <KilledProcess P>
class FlemingViot {
public:
    using State = typename P::State;

    FlemingViot(const P& process, std::vector<Observable<State>> observables, FvOptions opts)
        : process_(&process), obs_(std::move(observables)), opts_(opts) {
        require(opts_.n_particles >= 2, "fleming-viot: need at least two particles");
        require(opts_.record_stride >= 1, "fleming-viot: record stride must be >= 1");
        require(opts_.n_particles < (std::uint64_t{1} << 32), "fleming-viot: too many particles");
    }

    /// Places every particle at x0.
    void start(const State& x0) {
        start_with([&](std::size_t) { return x0; });
    }

    /// Places particle i at init(i).
    template <class Init>
    void start_with(Init&& init) {
        const std::size_t n = opts_.n_particles;
        particles_.clear();
        particles_.reserve(n);
        for (std::size_t i = 0; i < n; ++i) particles_.push_back(init(i));
        step_ = 0;
        timeline_ = FvTimeline{};
        timeline_.dt = process_->time_step();
        timeline_.n_particles = n;
        timeline_.record_stride = opts_.record_stride;
        for (const auto& o : obs_) timeline_.observable_names.push_back(o.name);
        history_.assign(n, {});
        slots_.assign(n, {});
        last_phase_.assign(n, std::vector<double>(obs_.size(), 0.0));
        record();
    }

    std::uint64_t step_index() const noexcept { return step_; }
    const std::vector<State>& particles() const noexcept { return particles_; }
    const FvTimeline& timeline() const noexcept { return timeline_; }

    /// Advances until step_index() == target (or n_steps).
    void run_until(std::uint64_t target) {
        target = std::min<std::uint64_t>(target, opts_.n_steps);
        const std::size_t n = opts_.n_particles;
        std::vector<StepOutcome> outcome(n);
        while (step_ < target) {
            const std::uint64_t step = step_;
            parallel_for(n, opts_.workers, [&](std::size_t i) {
                CounterStream rng(opts_.seed, i, step, StreamPurpose::dynamics);
                outcome[i] = process_->advance(particles_[i], rng);
            });
            std::vector<std::uint32_t> survivors;
            survivors.reserve(n);
            for (std::size_t i = 0; i < n; ++i) {
                if (outcome[i].alive) survivors.push_back(static_cast<std::uint32_t>(i));
            }
            std::size_t killed = n - survivors.size();
            if (survivors.empty()) {
                fail(ErrorKind::extinction, "fleming-viot: all " + std::to_string(n) +
                                                " particles killed at step " + std::to_string(step) +
                                                " (t = " + std::to_string(static_cast<double>(step + 1) * timeline_.dt) + ")");
            }
            timeline_.kill_fraction.push_back(static_cast<double>(killed) / static_cast<double>(n));
            if (killed > 0) {
                CounterStream rs(opts_.seed, 0, step, StreamPurpose::resample);
                for (std::size_t i = 0; i < n; ++i) {
                    if (outcome[i].alive) continue;
                    std::uint32_t donor = survivors[rs.below(survivors.size())];
                    particles_[i] = particles_[donor];
                    history_[i] = history_[donor];
                    slots_[i] = slots_[donor];
                    last_phase_[i] = last_phase_[donor];
                    if (timeline_.events.size() < opts_.max_logged_events) {
                        timeline_.events.push_back({step, static_cast<std::uint32_t>(i), donor});
                    }
                    ++timeline_.total_events;
                }
            }
            ++step_;
            if (step_ % opts_.record_stride == 0) record();
        }
    }

    /// Runs to n_steps and returns the timeline with lineage data attached.
    FvTimeline finish() {
        run_until(opts_.n_steps);
        timeline_.n_steps = step_;
        timeline_.lineage = history_;
        timeline_.lineage_slot = slots_;
        return timeline_;
    }

    // Checkpoint access: the full mutable state between steps.
    struct Snapshot {
        std::uint64_t step = 0;
        std::vector<State> particles;
        std::vector<std::vector<double>> history;
        std::vector<std::vector<std::uint32_t>> slots;
        std::vector<std::vector<double>> last_phase;
        FvTimeline timeline;
    };
    Snapshot snapshot() const { return {step_, particles_, history_, slots_, last_phase_, timeline_}; }
    void restore(Snapshot s) {
        require(s.particles.size() == opts_.n_particles, "fleming-viot: checkpoint particle count mismatch");
        step_ = s.step;
        particles_ = std::move(s.particles);
        history_ = std::move(s.history);
        slots_ = std::move(s.slots);
        last_phase_ = std::move(s.last_phase);
        timeline_ = std::move(s.timeline);
    }

private:
    void record() {
        const std::size_t n = opts_.n_particles;
        const std::size_t k = obs_.size();
        std::vector<double> values(n * k);
        parallel_for(n, opts_.workers, [&](std::size_t i) {
            for (std::size_t j = 0; j < k; ++j) values[i * k + j] = obs_[j].f(particles_[i]);
        });
        std::vector<double> means(k, 0.0);
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) means[j] += values[i * k + j];
        }
        for (double& m : means) m /= static_cast<double>(n);
        timeline_.cloud_mean.push_back(std::move(means));
        timeline_.record_times.push_back(static_cast<double>(step_) * timeline_.dt);
        const bool first = history_[0].empty();
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < k; ++j) {
                double v = values[i * k + j];
                if (obs_[j].is_phase) {
                    double period = obs_[j].period;
                    if (first) {
                        last_phase_[i][j] = v;
                    } else {
                        double prev_wrapped = last_phase_[i][j];
                        double inc = v - prev_wrapped;
                        double wrapped_inc = inc - period * std::round(inc / period);
                        if (std::abs(wrapped_inc) > 0.5 * period - 1e-12) ++timeline_.phase_jump_warnings;
                        double prev = history_[i][history_[i].size() - k + j];
                        last_phase_[i][j] = v;
                        v = prev + wrapped_inc;
                    }
                }
                history_[i].push_back(v);
            }
            slots_[i].push_back(static_cast<std::uint32_t>(i));
        }
    }

    const P* process_;
    std::vector<Observable<State>> obs_;
    FvOptions opts_;
    std::uint64_t step_ = 0;
    std::vector<State> particles_;
    std::vector<std::vector<double>> history_;
    std::vector<std::vector<std::uint32_t>> slots_;
    std::vector<std::vector<double>> last_phase_;
    FvTimeline timeline_;
};

template <KilledProcess P>
FvTimeline fleming_viot_run(const P& process, const typename P::State& x0,
                            std::vector<Observable<typename P::State>> observables, const FvOptions& opts) {
    FlemingViot<P> fv(process, std::move(observables), opts);
    fv.start(x0);
    return fv.finish();
}

// ---------------------------------------------------------------- survival

/// Empirical survival probabilities at t_k = k dt, k = 0..n_steps.
struct SurvivalCurve {
    std::vector<double> times;
    std::vector<double> prob;
    /// Number of independent paths; 0 marks an exact or Fleming-Viot curve
    /// (no binomial noise floor).
    std::size_t n_paths = 0;
};

/// Kill step of each path (n_steps + 1 when it survives); paths are
/// independent, path i uses streams (seed, i, step).
template <KilledProcess P, class Init>
std::vector<std::uint64_t> kill_steps(const P& process, Init&& init, std::size_t n_paths, std::size_t n_steps,
                                      std::uint64_t seed, unsigned workers) {
    std::vector<std::uint64_t> out(n_paths, n_steps + 1);
    parallel_for(n_paths, workers, [&](std::size_t i) {
        typename P::State s = init(i);
        for (std::uint64_t step = 0; step < n_steps; ++step) {
            CounterStream rng(seed, i, step, StreamPurpose::dynamics);
            if (!process.advance(s, rng).alive) {
                out[i] = step + 1;
                return;
            }
        }
    });
    return out;
}

SurvivalCurve curve_from_kill_steps(std::span<const std::uint64_t> kill_steps, std::size_t n_steps, double dt);

/// n_paths independent killed runs from init(i); monotone by construction.
template <KilledProcess P, class Init>
SurvivalCurve survival_curve(const P& process, Init&& init, std::size_t n_paths, std::size_t n_steps,
                             std::uint64_t seed, unsigned workers = 1) {
    auto ks = kill_steps(process, init, n_paths, n_steps, seed, workers);
    return curve_from_kill_steps(ks, n_steps, process.time_step());
}

/// prod (1 - k_n): the Fleming-Viot estimate of P[t < tau] from the start law.
SurvivalCurve fv_survival_curve(const FvTimeline& tl);

struct Lambda1Estimate {
    double lambda1 = 0.0;
    double std_error = 0.0;
    double window_start = 0.0;
    double window_end = 0.0;
    double r2 = 0.0;
    std::size_t n_points = 0;
};

/// Least-squares slope of ln P on the tail window starting where the local
/// slope settles within 10% of the tail fit. Points with P <= 10 / n_paths are
/// excluded. Throws NoLinearTail when fewer than 10 points remain, nothing
/// decays, or R^2 < 0.95. The window never starts before t_min (a burn-in
/// past the initial transient, when one is known).
Lambda1Estimate estimate_lambda1(const SurvivalCurve& curve, double t_min = 0.0);

// ---------------------------------------------------------- conditioned law

struct FunctionalEstimate {
    std::string name;
    double value = 0.0;
    double std_error = 0.0;
    double first_half = 0.0;
    double first_half_se = 0.0;
    double second_half = 0.0;
    double second_half_se = 0.0;
    double z_halves = 0.0;
};

struct QsdSnapshot {
    double burn_in = 0.0;
    std::vector<FunctionalEstimate> functionals;
    bool stationary = true;
};

/// Post-burn-in time average of the cloud means with batch-means errors, and
/// a first-half versus second-half comparison. Throws NotStationary when any
/// functional's halves differ by more than 3 combined standard errors, or when
/// nothing was ever killed (the conditioned law is then degenerate).
/// gamma > 0 enforces burn_in >= 10 / gamma.
QsdSnapshot qsd_snapshot(const FvTimeline& tl, double burn_in, double gamma = 0.0);

/// Fraction of the final cloud in each of n_bins classes of `bin_of`.
template <class State, class BinOf>
std::vector<double> cloud_histogram(const std::vector<State>& cloud, std::size_t n_bins, BinOf&& bin_of) {
    std::vector<double> h(n_bins, 0.0);
    for (const auto& s : cloud) {
        std::size_t b = bin_of(s);
        if (b < n_bins) h[b] += 1.0;
    }
    for (double& v : h) v /= static_cast<double>(cloud.size());
    return h;
}

struct QedEstimate {
    std::string name;
    double value = 0.0;
    double std_error = 0.0;
    double window_start = 0.0;
    double window_end = 0.0;
};

/// Time average of observable k along the ancestral lineages of the final
/// particles over [burn_in, t_end - end_exclusion]. Batches group lineages by
/// their ancestor slot at the window start (mod 10), so coalesced lineages
/// share a batch.
QedEstimate qed_time_average(const FvTimeline& tl, std::size_t k, double burn_in, double end_exclusion);

/// Mean slope of an unwrapped phase observable along the lineages over the
/// same window; batches as in qed_time_average.
QedEstimate qed_phase_velocity(const FvTimeline& tl, std::size_t k, double burn_in, double end_exclusion);

/// Decay rate of the lineage autocorrelation of observable k after burn_in:
/// gamma_hat from the log-linear part where the correlation exceeds 0.05.
Estimate estimate_gamma(const FvTimeline& tl, std::size_t k, double burn_in);

/// lambda1 from the mean per-step kill fraction after burn_in.
Estimate fv_lambda1(const FvTimeline& tl, double burn_in);

// -------------------------------------------------------------------- phi

struct PhiEstimate {
    std::vector<double> survival;
    std::vector<double> survival_se;
    /// e^{lambda1 t} P_x[t < tau]; proportional to phi(x).
    std::vector<double> phi;
    std::vector<double> phi_se;
    /// phi(x_i) / phi(x_0) with the lambda1 factor cancelled.
    std::vector<double> ratio;
    std::vector<double> ratio_se;
};

PhiEstimate phi_from_survival(std::span<const double> survival, std::size_t n_paths, double lambda1,
                              double lambda1_se, double t_probe);

/// Runs n_paths killed paths of t_probe_steps from each probe state.
template <KilledProcess P>
PhiEstimate estimate_phi(const P& process, const std::vector<typename P::State>& probes, double lambda1,
                         double lambda1_se, std::size_t t_probe_steps, std::size_t n_paths, std::uint64_t seed,
                         unsigned workers = 1) {
    require(!probes.empty(), "estimate_phi: need at least one probe");
    std::vector<double> surv(probes.size());
    for (std::size_t p = 0; p < probes.size(); ++p) {
        auto ks = kill_steps(
            process, [&](std::size_t) { return probes[p]; }, n_paths, t_probe_steps,
            seed + 0x9E3779B97F4A7C15ull * (p + 1), workers);
        std::size_t alive = 0;
        for (auto k : ks) alive += k > t_probe_steps ? 1 : 0;
        surv[p] = static_cast<double>(alive) / static_cast<double>(n_paths);
    }
    return phi_from_survival(surv, n_paths, lambda1, lambda1_se,
                             static_cast<double>(t_probe_steps) * process.time_step());
}

/// Nadaraya-Watson smoother of phi over a scalar reduced coordinate
/// (Gaussian kernel); used to weight paths whose state is not tabulable.
class KernelPhi {
public:
    KernelPhi(std::vector<double> coords, std::vector<double> values, double bandwidth, double period = 0.0);
    double operator()(double coord) const;

private:
    std::vector<double> coords_;
    std::vector<double> values_;
    double bandwidth_;
    double period_;
};

// --------------------------------------------------------------- Q-process

struct QProcessSample {
    std::size_t n_paths = 0;
    std::vector<double> times;
    /// Mean of M_s over all paths (killed paths contribute 0) and its error.
    std::vector<double> mean_weight;
    std::vector<double> mean_weight_se;
    /// Effective sample size (sum w)^2 / sum w^2 at each s.
    std::vector<double> ess;
    /// Self-normalized transition frequencies between bins, row-major.
    std::size_t n_bins = 0;
    std::vector<double> transition;
    std::vector<double> transition_se;
    std::vector<double> bin_weight;
};

/// Killed paths from x0 weighted by M_s = e^{lambda1 s} phi(Z_s) / phi(x0).
/// Transition frequencies pool steps s < n_steps with weight M_{s+1}.
/// Throws DegenerateWeights when the ESS at the horizon drops below 1% of n.
template <KilledProcess P, class Phi, class BinOf>
QProcessSample q_process_sample(const P& process, const typename P::State& x0, Phi&& phi, double lambda1,
                                std::size_t n_steps, std::size_t n_paths, std::size_t n_bins, BinOf&& bin_of,
                                std::uint64_t seed, unsigned workers = 1) {
    require(n_paths >= 10, "q_process_sample: need at least 10 paths");
    const double dt = process.time_step();
    const double phi0 = phi(x0);
    require(phi0 > 0.0, "q_process_sample: phi(x0) must be positive");
    constexpr std::size_t kBatches = 10;
    // Per path: weights per s and (from, to) bins per step while alive.
    std::vector<std::vector<double>> weights(n_paths);
    std::vector<std::vector<std::pair<std::size_t, std::size_t>>> moves(n_paths);
    parallel_for(n_paths, workers, [&](std::size_t i) {
        typename P::State s = x0;
        auto& w = weights[i];
        w.assign(n_steps + 1, 0.0);
        w[0] = 1.0;
        for (std::uint64_t step = 0; step < n_steps; ++step) {
            std::size_t from = bin_of(s);
            CounterStream rng(seed, i, step, StreamPurpose::dynamics);
            if (!process.advance(s, rng).alive) return;
            double t = static_cast<double>(step + 1) * dt;
            w[step + 1] = std::exp(lambda1 * t) * phi(s) / phi0;
            moves[i].emplace_back(from, bin_of(s));
        }
    });
    QProcessSample out;
    out.n_paths = n_paths;
    out.n_bins = n_bins;
    for (std::size_t s = 0; s <= n_steps; ++s) {
        out.times.push_back(static_cast<double>(s) * dt);
        std::vector<double> batch(kBatches, 0.0);
        std::vector<double> count(kBatches, 0.0);
        double sw = 0.0, sw2 = 0.0;
        for (std::size_t i = 0; i < n_paths; ++i) {
            double w = weights[i][s];
            batch[i % kBatches] += w;
            count[i % kBatches] += 1.0;
            sw += w;
            sw2 += w * w;
        }
        for (std::size_t b = 0; b < kBatches; ++b) batch[b] /= count[b];
        Estimate e = mean_of_batches(batch);
        out.mean_weight.push_back(sw / static_cast<double>(n_paths));
        out.mean_weight_se.push_back(e.std_error);
        out.ess.push_back(sw2 > 0.0 ? sw * sw / sw2 : 0.0);
    }
    if (out.ess.back() < 0.01 * static_cast<double>(n_paths)) {
        fail(ErrorKind::degenerate_weights,
             "q_process_sample: effective sample size " + std::to_string(out.ess.back()) + " below 1% of paths");
    }
    // Ratio estimator per batch, then across batches.
    std::vector<std::vector<double>> num(kBatches, std::vector<double>(n_bins * n_bins, 0.0));
    for (std::size_t i = 0; i < n_paths; ++i) {
        for (std::size_t s = 0; s < moves[i].size(); ++s) {
            auto [from, to] = moves[i][s];
            if (from < n_bins && to < n_bins) num[i % kBatches][from * n_bins + to] += weights[i][s + 1];
        }
    }
    std::vector<double> pooled(n_bins * n_bins, 0.0);
    for (const auto& b : num)
        for (std::size_t k = 0; k < pooled.size(); ++k) pooled[k] += b[k];
    out.transition.assign(n_bins * n_bins, 0.0);
    out.transition_se.assign(n_bins * n_bins, 0.0);
    out.bin_weight.assign(n_bins, 0.0);
    for (std::size_t a = 0; a < n_bins; ++a) {
        double row = 0.0;
        for (std::size_t c = 0; c < n_bins; ++c) row += pooled[a * n_bins + c];
        out.bin_weight[a] = row;
        if (row <= 0.0) continue;
        for (std::size_t c = 0; c < n_bins; ++c) out.transition[a * n_bins + c] = pooled[a * n_bins + c] / row;
        for (std::size_t c = 0; c < n_bins; ++c) {
            std::vector<double> vals;
            for (const auto& b : num) {
                double br = 0.0;
                for (std::size_t d = 0; d < n_bins; ++d) br += b[a * n_bins + d];
                if (br > 0.0) vals.push_back(b[a * n_bins + c] / br);
            }
            out.transition_se[a * n_bins + c] = mean_of_batches(vals).std_error;
        }
    }
    return out;
}

}  // namespace qpattern
