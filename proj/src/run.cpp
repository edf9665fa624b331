#include "qpattern/run.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <memory>
#include <sstream>

#include <json.hpp>

#include "qpattern/chain.hpp"
#include "qpattern/checkpoint.hpp"
#include "qpattern/digest.hpp"
#include "qpattern/dynamics.hpp"
#include "qpattern/ensemble.hpp"
#include "qpattern/phase.hpp"
#include "qpattern/polynomial.hpp"
#include "qpattern/tube.hpp"

namespace qpattern {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

std::string num(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

json finite_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

/// Estimator record: every number with its standard error or an exact tag.
json record(const std::string& name, double value, double se, bool exact = false) {
    json j = {{"name", name}, {"estimate", finite_or_null(value)}};
    if (exact) {
        j["exact"] = true;
    } else {
        j["stderr"] = finite_or_null(se);
    }
    return j;
}

class Output {
public:
    Output(const OutputConfig& oc) : dir_(oc.directory), csv_(oc.csv), json_(oc.json) {
        fs::create_directories(dir_);
        fs::remove(dir_ / "error.json");
        fs::remove(dir_ / "manifest.json");
    }

    const fs::path& dir() const noexcept { return dir_; }

    void csv(const std::string& name, const std::string& content) {
        if (csv_) write(name, content);
    }
    void json_file(const std::string& name, const json& j) {
        if (json_) write(name, j.dump(2) + "\n");
    }

private:
    void write(const std::string& name, const std::string& content) {
        std::ofstream out(dir_ / name, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::io_error, "cannot write '" + (dir_ / name).string() + "'");
        out << content;
    }

    fs::path dir_;
    bool csv_;
    bool json_;
};

// ------------------------------------------------------------ model setup

Field initial_field(const ModelConfig& m) {
    const Grid& g = m.spde.grid;
    const InitialFieldConfig& ic = m.initial;
    Field f(g);
    if (ic.kind == "file") {
        std::ifstream in(ic.path);
        if (!in) fail(ErrorKind::io_error, "cannot read initial field '" + ic.path + "'");
        for (double& v : f.values) {
            if (!(in >> v)) fail(ErrorKind::parse_error, "initial field '" + ic.path + "' has too few values");
        }
        f.validate();
        return f;
    }
    const double dx = g.dx();
    for (std::size_t j = 0; j < g.n_grid; ++j) {
        double x = static_cast<double>(j) * dx;
        double value = ic.low;
        if (ic.kind == "front") {
            value = ic.low + (ic.high - ic.low) * 0.5 * (1.0 - std::tanh((x - ic.position) / ic.width));
        } else if (ic.kind == "pulse") {
            double lo = ic.position - ic.width;
            double up = 0.5 * (std::tanh(x - lo) - std::tanh(x - ic.position));
            value = ic.low + (ic.high - ic.low) * up;
            if (g.n_comp >= 2 && ic.refractory != 0.0) {
                double back = 0.5 * (std::tanh(x - (lo - ic.width)) - std::tanh(x - lo));
                f.at(1, j) = ic.refractory * back;
            }
        } else if (ic.kind == "constant") {
            value = ic.high;
        }
        f.at(ic.component, j) = value;
    }
    if (g.boundary == Boundary::dirichlet) {
        for (std::size_t c = 0; c < g.n_comp; ++c) f.at(c, 0) = 0.0;
    }
    return f;
}

Polynomial sde_drift(const SdeModelConfig& s) {
    if (s.preset == "radial_twist") return radial_twist_drift(s.omega, s.beta);
    std::vector<std::vector<Monomial>> terms;
    for (const auto& text : s.drift) terms.push_back(Polynomial::parse_component(text, s.drift.size()));
    return Polynomial(s.drift.size(), std::move(terms));
}

/// A stochastic system, its tube and the start state.
struct System {
    std::unique_ptr<Dynamics> dyn;
    TubeSpec tube;
    std::vector<double> x0;
    std::vector<std::string> warnings;
};

std::unique_ptr<Dynamics> make_dynamics(const ExperimentConfig& cfg, double sigma) {
    const ModelConfig& m = cfg.model;
    const double dt = cfg.run.dt;
    if (m.type == ModelType::sde) {
        double det_dt = m.sde.det_dt > 0.0 ? m.sde.det_dt : dt;
        return std::make_unique<PolynomialSde>(sde_drift(m.sde), m.sde.noise, sigma, dt, det_dt,
                                               m.sde.contraction_time);
    }
    ModelSpec spec = m.spde;
    spec.sigma = sigma;
    return std::make_unique<SpdeDynamics>(spec, dt);
}

System make_system(const ExperimentConfig& cfg, double sigma) {
    System s;
    s.dyn = make_dynamics(cfg, sigma);
    const TubeConfig& tc = cfg.tube;
    const ManifoldConfig& mc = tc.manifold;
    PatternManifold manifold;
    if (mc.kind == "radial_twist") {
        manifold = radial_twist_manifold(cfg.model.sde.omega, mc.n_phase);
    } else if (mc.kind == "file") {
        std::ifstream in(mc.path);
        if (!in) fail(ErrorKind::io_error, "cannot read manifold '" + mc.path + "'");
        manifold = read_manifold_csv(in);
    } else if (mc.kind == "cycle") {
        std::vector<double> x0 = cfg.model.type == ModelType::sde ? cfg.model.sde.initial
                                                                   : initial_field(cfg.model).values;
        manifold = build_cycle_manifold(x0, *s.dyn, mc.relax_time, mc.period_guess, mc.n_phase, mc.section_coord);
    } else {
        const auto& spde = dynamic_cast<const SpdeDynamics&>(*s.dyn);
        manifold = build_wave_manifold(initial_field(cfg.model), spde, mc.relax_time, mc.measure_time);
    }
    s.tube.delta = tc.delta;
    s.tube.manifold = std::move(manifold);
    s.tube.norm = tc.norm;
    if (tc.validity_radius > 0.0) s.tube.validity_radius = tc.validity_radius;
    s.tube.validate();
    s.x0 = s.tube.manifold.point(0.0);
    if (cfg.model.type == ModelType::spde) {
        ModelSpec spec = cfg.model.spde;
        spec.sigma = sigma;
        double kappa = spec.kappa_bound ? *spec.kappa_bound : tube_kappa(spec, s.tube);
        auto rep = validate_assumptions(spec, kappa);
        s.warnings = rep.warnings;
    }
    return s;
}

// ------------------------------------------------------- shared emitters

std::string survival_csv(const SurvivalCurve& c, const std::vector<double>* exact) {
    std::ostringstream os;
    os << "t,survival,stderr" << (exact ? ",exact" : "") << "\n";
    const double n = static_cast<double>(c.n_paths);
    for (std::size_t k = 0; k < c.times.size(); ++k) {
        double p = c.prob[k];
        os << num(c.times[k]) << "," << num(p) << "," << num(n > 0 ? std::sqrt(p * (1.0 - p) / n) : 0.0);
        if (exact) os << "," << num((*exact)[k]);
        os << "\n";
    }
    return os.str();
}

json lambda1_record(const SurvivalCurve& c, const std::string& name, double t_min = 0.0) {
    try {
        Lambda1Estimate e = estimate_lambda1(c, t_min);
        json j = record(name, e.lambda1, e.std_error);
        j["window"] = {e.window_start, e.window_end};
        j["diagnostics"] = {{"r2", e.r2}, {"n_points", e.n_points}};
        return j;
    } catch (const Error& e) {
        if (e.kind() != ErrorKind::no_linear_tail) throw;
        return json{{"name", name}, {"estimate", nullptr}, {"stderr", nullptr},
                    {"diagnostics", {{"error", to_string(e.kind())}, {"message", e.what()}}}};
    }
}

std::vector<double> exact_survival(const SubMarkovMatrix& q, std::size_t x0, std::size_t n_steps) {
    std::vector<double> out;
    std::vector<double> w(q.n, 0.0), next(q.n);
    w[x0] = 1.0;
    for (std::size_t k = 0; k <= n_steps; ++k) {
        double s = 0.0;
        for (double v : w) s += v;
        out.push_back(s);
        std::fill(next.begin(), next.end(), 0.0);
        for (std::size_t i = 0; i < q.n; ++i) {
            if (w[i] == 0.0) continue;
            for (std::size_t j = 0; j < q.n; ++j) next[j] += w[i] * q(i, j);
        }
        w.swap(next);
    }
    return out;
}

/// sum(a) / sum(b) with a delta-method standard error over paired samples.
Estimate ratio_of_means(const std::vector<double>& a, const std::vector<double>& b) {
    const double n = static_cast<double>(a.size());
    if (a.empty()) return {std::nan(""), std::nan("")};
    double ma = mean(a), mb = mean(b);
    if (!(mb > 0.0)) return {std::nan(""), std::nan("")};
    double r = ma / mb;
    std::vector<double> lin(a.size());
    for (std::size_t i = 0; i < a.size(); ++i) lin[i] = (a[i] - r * b[i]) / mb;
    return {r, a.size() > 1 ? std::sqrt(sample_variance(lin) / n) : 0.0};
}

std::size_t steps_for(double t_max, double dt) {
    return static_cast<std::size_t>(std::ceil(t_max / dt - 1e-9));
}

// ---------------------------------------------------- Fleming-Viot driver

struct RunContext {
    const ExperimentConfig& cfg;
    const RunOptions& opts;
    Output& out;
    std::string hash;
    bool interrupted = false;
};

/// Runs (or resumes) a Fleming-Viot system with periodic checkpoints.
/// Returns false when stopped early by stop_after_step.
template <KilledProcess P>
bool drive_fv(FlemingViot<P>& fv, const typename P::State& x0, RunContext& ctx) {
    using Snapshot = typename FlemingViot<P>::Snapshot;
    const RunConfig& rc = ctx.cfg.run;
    const std::string ckpt_dir = (ctx.out.dir() / "checkpoint").string();
    if (ctx.opts.resume_dir) {
        std::string state;
        CheckpointManifest m = read_checkpoint(*ctx.opts.resume_dir, state);
        if (m.config_hash != ctx.hash) {
            fail(ErrorKind::validation_error, "checkpoint was written for a different configuration (hash " +
                                                  m.config_hash.substr(0, 12) + ")");
        }
        if (m.run_kind != to_string(rc.kind)) {
            fail(ErrorKind::validation_error, "checkpoint belongs to run kind '" + m.run_kind + "'");
        }
        fv.start(x0);
        fv.restore(decode_fv_snapshot<Snapshot>(state));
        if (fv.step_index() != m.step) fail(ErrorKind::corrupt_checkpoint, "checkpoint step disagrees with payload");
    } else {
        fv.start(x0);
    }
    auto save = [&] {
        CheckpointManifest m;
        m.run_kind = std::string(to_string(rc.kind));
        m.config_hash = ctx.hash;
        m.seed = *rc.seed;
        m.step = fv.step_index();
        write_checkpoint(ckpt_dir, m, encode_fv_snapshot(fv.snapshot()));
    };
    const std::uint64_t stop = ctx.opts.stop_after_step ? *ctx.opts.stop_after_step
                                                        : std::numeric_limits<std::uint64_t>::max();
    const std::uint64_t every = rc.checkpoint_every;
    while (true) {
        std::uint64_t target = std::numeric_limits<std::uint64_t>::max();
        if (every > 0) target = (fv.step_index() / every + 1) * every;
        target = std::min(target, stop);
        std::uint64_t before = fv.step_index();
        fv.run_until(target);
        if (every > 0 && fv.step_index() % every == 0 && fv.step_index() != before) save();
        if (fv.step_index() >= stop) {
            if (every == 0 || fv.step_index() % every != 0) save();
            return false;
        }
        if (fv.step_index() == before) return true;
    }
}

std::string kill_fraction_csv(const FvTimeline& tl) {
    std::ostringstream os;
    os << "step,t,kill_fraction,survival\n";
    double p = 1.0;
    for (std::size_t k = 0; k < tl.kill_fraction.size(); ++k) {
        p *= 1.0 - tl.kill_fraction[k];
        os << k + 1 << "," << num(static_cast<double>(k + 1) * tl.dt) << "," << num(tl.kill_fraction[k]) << ","
           << num(p) << "\n";
    }
    return os.str();
}

std::string cloud_csv(const FvTimeline& tl) {
    std::ostringstream os;
    os << "t";
    for (const auto& n : tl.observable_names) os << "," << n;
    os << "\n";
    for (std::size_t r = 0; r < tl.n_records(); ++r) {
        os << num(tl.record_times[r]);
        for (double v : tl.cloud_mean[r]) os << "," << num(v);
        os << "\n";
    }
    return os.str();
}

std::string resample_csv(const FvTimeline& tl) {
    std::ostringstream os;
    os << "step,dead,donor\n";
    for (const auto& e : tl.events) os << e.step << "," << e.dead << "," << e.donor << "\n";
    return os.str();
}

json qsd_json(const QsdSnapshot& q) {
    json arr = json::array();
    for (const auto& f : q.functionals) {
        json j = record(f.name, f.value, f.std_error);
        j["diagnostics"] = {{"first_half", f.first_half},   {"first_half_stderr", f.first_half_se},
                            {"second_half", f.second_half}, {"second_half_stderr", f.second_half_se},
                            {"z_halves", finite_or_null(f.z_halves)}};
        arr.push_back(j);
    }
    return json{{"burn_in", q.burn_in}, {"stationary", q.stationary}, {"functionals", arr}};
}

// ------------------------------------------------------------ chain runs

std::vector<Observable<std::size_t>> chain_observables(const SubMarkovMatrix& q, const RunConfig& rc,
                                                       std::vector<std::vector<double>>& values) {
    std::vector<std::size_t> states = rc.probes;
    if (states.empty() && q.n <= 16)
        for (std::size_t i = 0; i < q.n; ++i) states.push_back(i);
    std::vector<Observable<std::size_t>> obs;
    values.clear();
    for (std::size_t s : states) {
        require(s < q.n, "run.probes: state " + std::to_string(s) + " out of range");
        obs.push_back({"state_" + std::to_string(s), [s](const std::size_t& x) { return x == s ? 1.0 : 0.0; }});
        std::vector<double> f(q.n, 0.0);
        f[s] = 1.0;
        values.push_back(f);
    }
    std::vector<double> pos(q.n);
    for (std::size_t i = 0; i < q.n; ++i) pos[i] = q.centers.empty() ? static_cast<double>(i) : q.centers[i];
    obs.push_back({"position", [pos](const std::size_t& x) { return pos[x]; }});
    values.push_back(pos);
    return obs;
}

double dot(const std::vector<double>& a, const std::vector<double>& b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

void chain_survival(RunContext& ctx, const SubMarkovMatrix& q, const SpectralData& sd) {
    const RunConfig& rc = ctx.cfg.run;
    ChainProcess proc(q);
    const std::size_t x0 = ctx.cfg.model.chain.start_state;
    const std::size_t n_steps = steps_for(rc.t_max, q.dt_per_step);
    SurvivalCurve c = survival_curve(
        proc, [x0](std::size_t) { return x0; }, rc.n_paths, n_steps, *rc.seed, rc.workers);
    auto exact = exact_survival(q, x0, n_steps);
    ctx.out.csv("survival.csv", survival_csv(c, &exact));
    json j = {{"lambda1", lambda1_record(c, "lambda1")},
              {"lambda1_oracle", record("lambda1", sd.lambda1, 0.0, true)},
              {"diagnostics", {{"n_paths", rc.n_paths}}}};
    ctx.out.json_file("lambda1.json", j);
}

bool chain_fv(RunContext& ctx, const SubMarkovMatrix& q, const SpectralData& sd) {
    const RunConfig& rc = ctx.cfg.run;
    ChainProcess proc(q);
    std::vector<std::vector<double>> fvals;
    auto obs = chain_observables(q, rc, fvals);
    FvOptions o;
    o.n_particles = rc.n_particles;
    o.n_steps = steps_for(rc.t_max, q.dt_per_step);
    o.seed = *rc.seed;
    o.workers = rc.workers;
    o.record_stride = rc.record_stride;
    FlemingViot<ChainProcess> fv(proc, obs, o);
    if (!drive_fv(fv, ctx.cfg.model.chain.start_state, ctx)) return false;
    std::vector<std::size_t> cloud = fv.particles();
    FvTimeline tl = fv.finish();

    const double gamma = sd.gap_gamma;
    const double burn = rc.burn_in >= 0.0 ? rc.burn_in : (std::isfinite(gamma) ? 10.0 / gamma : 0.0);
    const double excl = rc.end_exclusion >= 0.0 ? rc.end_exclusion : (std::isfinite(gamma) ? 5.0 / gamma : 0.0);
    ctx.out.csv("kill_fraction.csv", kill_fraction_csv(tl));
    ctx.out.csv("cloud.csv", cloud_csv(tl));
    ctx.out.csv("resample_log.csv", resample_csv(tl));
    Estimate fl = fv_lambda1(tl, burn);
    json lj = {{"lambda1_kill_rate", record("lambda1", fl.value, fl.std_error)},
               {"lambda1_curve", lambda1_record(fv_survival_curve(tl), "lambda1", burn)},
               {"lambda1_oracle", record("lambda1", sd.lambda1, 0.0, true)},
               {"diagnostics", {{"burn_in", burn}, {"resample_events", tl.total_events}}}};
    ctx.out.json_file("lambda1.json", lj);

    auto alpha = exact_qsd(sd, q.mu);
    auto beta = exact_qed(sd, q.mu);
    if (rc.kind == RunKind::qsd) {
        QsdSnapshot snap = qsd_snapshot(tl, burn, std::isfinite(gamma) ? gamma : 0.0);
        auto hist = cloud_histogram(cloud, q.n, [](std::size_t s) { return s; });
        std::ostringstream os;
        os << "state,alpha_hat,alpha_exact\n";
        for (std::size_t i = 0; i < q.n; ++i) os << i << "," << num(hist[i]) << "," << num(alpha[i]) << "\n";
        ctx.out.csv("histogram.csv", os.str());
        json j = qsd_json(snap);
        j["diagnostics"] = {{"total_variation_final_cloud", total_variation(hist, alpha)}};
        json ex = json::array();
        for (std::size_t k = 0; k < obs.size(); ++k) ex.push_back(record(obs[k].name, dot(alpha, fvals[k]), 0.0, true));
        j["oracle"] = ex;
        ctx.out.json_file("qsd.json", j);
    }
    if (rc.kind == RunKind::qed) {
        json arr = json::array();
        for (std::size_t k = 0; k < obs.size(); ++k) {
            QedEstimate e = qed_time_average(tl, k, burn, excl);
            json j = record(e.name, e.value, e.std_error);
            j["window"] = {e.window_start, e.window_end};
            j["oracle"] = record(e.name, dot(beta, fvals[k]), 0.0, true);
            arr.push_back(j);
        }
        ctx.out.json_file("qed.json", json{{"functionals", arr},
                                           {"diagnostics", {{"burn_in", burn}, {"end_exclusion", excl}}}});
    }
    return true;
}

void chain_q_process(RunContext& ctx, const SubMarkovMatrix& q, const SpectralData& sd) {
    const RunConfig& rc = ctx.cfg.run;
    ChainProcess proc(q);
    const std::size_t x0 = ctx.cfg.model.chain.start_state;
    QProcessSample s = q_process_sample(
        proc, x0, [&](std::size_t i) { return sd.v[i]; }, sd.lambda1, rc.q_steps, rc.n_paths, q.n,
        [](std::size_t i) { return i; }, *rc.seed, rc.workers);
    auto exact = q_process_matrix(sd, q);
    std::ostringstream os;
    os << "from,to,p_hat,stderr,p_exact\n";
    double worst = 0.0;
    for (std::size_t a = 0; a < q.n; ++a) {
        if (s.bin_weight[a] <= 0.0) continue;
        for (std::size_t b = 0; b < q.n; ++b) {
            double p = s.transition[a * q.n + b], se = s.transition_se[a * q.n + b], e = exact[a * q.n + b];
            os << a << "," << b << "," << num(p) << "," << num(se) << "," << num(e) << "\n";
            if (se > 0.0) worst = std::max(worst, std::abs(p - e) / se);
        }
    }
    ctx.out.csv("q_process.csv", os.str());
    std::ostringstream ms;
    ms << "step,t,mean_weight,stderr,ess\n";
    for (std::size_t k = 0; k < s.times.size(); ++k) {
        ms << k << "," << num(s.times[k]) << "," << num(s.mean_weight[k]) << "," << num(s.mean_weight_se[k]) << ","
           << num(s.ess[k]) << "\n";
    }
    ctx.out.csv("martingale.csv", ms.str());
    ctx.out.json_file("q_process.json",
                      json{{"lambda1_oracle", record("lambda1", sd.lambda1, 0.0, true)},
                           {"diagnostics", {{"n_paths", s.n_paths}, {"max_transition_z", worst}, {"final_ess", s.ess.back()}}}});
}

// ----------------------------------------------------- sde / spde runs

std::vector<Observable<std::vector<double>>> tube_observables(const TubeSpec& tube) {
    const double period = tube.manifold.period_or_length;
    return {
        {"tube_distance", [&tube](const std::vector<double>& x) { return tube_distance(x, tube).dist; }},
        {"manifold_phase", [&tube](const std::vector<double>& x) { return tube_distance(x, tube).phase; }, true,
         period},
    };
}

void field_survival(RunContext& ctx, const System& sys) {
    const RunConfig& rc = ctx.cfg.run;
    DynamicsProcess proc(*sys.dyn, [&](std::span<const double> x) { return is_inside(x, sys.tube); });
    SurvivalCurve c = survival_curve(
        proc, [&](std::size_t) { return sys.x0; }, rc.n_paths, steps_for(rc.t_max, rc.dt), *rc.seed, rc.workers);
    ctx.out.csv("survival.csv", survival_csv(c, nullptr));
    ctx.out.json_file("lambda1.json",
                      json{{"lambda1", lambda1_record(c, "lambda1")}, {"diagnostics", {{"n_paths", rc.n_paths}}}});
}

bool field_fv(RunContext& ctx, const System& sys) {
    const RunConfig& rc = ctx.cfg.run;
    DynamicsProcess proc(*sys.dyn, [&](std::span<const double> x) { return is_inside(x, sys.tube); });
    auto obs = tube_observables(sys.tube);
    FvOptions o;
    o.n_particles = rc.n_particles;
    o.n_steps = steps_for(rc.t_max, rc.dt);
    o.seed = *rc.seed;
    o.workers = rc.workers;
    o.record_stride = rc.record_stride;
    FlemingViot<DynamicsProcess> fv(proc, obs, o);
    if (!drive_fv(fv, sys.x0, ctx)) return false;
    std::vector<std::vector<double>> cloud = fv.particles();
    FvTimeline tl = fv.finish();
    const double t_end = static_cast<double>(o.n_steps) * rc.dt;
    const double burn = rc.burn_in >= 0.0 ? rc.burn_in : 0.5 * t_end;
    const double excl = rc.end_exclusion >= 0.0 ? rc.end_exclusion : 0.1 * t_end;
    ctx.out.csv("kill_fraction.csv", kill_fraction_csv(tl));
    ctx.out.csv("cloud.csv", cloud_csv(tl));
    ctx.out.csv("resample_log.csv", resample_csv(tl));
    Estimate fl = fv_lambda1(tl, burn);
    ctx.out.json_file("lambda1.json", json{{"lambda1_kill_rate", record("lambda1", fl.value, fl.std_error)},
                                           {"lambda1_curve", lambda1_record(fv_survival_curve(tl), "lambda1", burn)},
                                           {"diagnostics", {{"burn_in", burn}, {"resample_events", tl.total_events}}}});
    if (rc.kind == RunKind::qsd) {
        QsdSnapshot snap = qsd_snapshot(tl, burn);
        const std::size_t bins = rc.histogram_bins;
        const double delta = sys.tube.delta;
        auto hist = cloud_histogram(cloud, bins, [&](const std::vector<double>& x) {
            double d = tube_distance(x, sys.tube).dist;
            return std::min<std::size_t>(bins - 1, static_cast<std::size_t>(d / delta * static_cast<double>(bins)));
        });
        std::ostringstream os;
        os << "distance_lo,distance_hi,fraction\n";
        for (std::size_t b = 0; b < bins; ++b) {
            os << num(delta * static_cast<double>(b) / static_cast<double>(bins)) << ","
               << num(delta * static_cast<double>(b + 1) / static_cast<double>(bins)) << "," << num(hist[b]) << "\n";
        }
        ctx.out.csv("histogram.csv", os.str());
        ctx.out.json_file("qsd.json", qsd_json(snap));
    }
    if (rc.kind == RunKind::qed) {
        QedEstimate d = qed_time_average(tl, 0, burn, excl);
        QedEstimate v = qed_phase_velocity(tl, 1, burn, excl);
        json dj = record(d.name, d.value, d.std_error);
        dj["window"] = {d.window_start, d.window_end};
        json vj = record("manifold_phase_velocity", v.value, v.std_error);
        vj["window"] = {v.window_start, v.window_end};
        ctx.out.json_file("qed.json", json{{"functionals", {dj, vj}},
                                           {"diagnostics", {{"burn_in", burn}, {"end_exclusion", excl}}}});
    }
    return true;
}

IsochronOptions isochron_options(const RunConfig& rc) {
    IsochronOptions io;
    io.relax_time = rc.relax_time;
    io.n_directions = rc.fd_directions;
    io.workers = rc.workers;
    return io;
}

FrequencyEstimate run_frequency(const RunConfig& rc, const System& sys, const IsochronMap& iso, double& burn,
                                double& excl) {
    DynamicsProcess proc(*sys.dyn, [&](std::span<const double> x) { return is_inside(x, sys.tube); });
    FvOptions o;
    o.n_particles = rc.n_particles;
    o.n_steps = steps_for(rc.t_max, rc.dt);
    o.seed = *rc.seed;
    o.workers = rc.workers;
    o.record_stride = rc.record_stride;
    FvTimeline tl = fleming_viot_run(proc, sys.x0, phase_observables(iso), o);
    const double t_end = static_cast<double>(o.n_steps) * rc.dt;
    burn = rc.burn_in >= 0.0 ? rc.burn_in : 0.2 * t_end;
    excl = rc.end_exclusion >= 0.0 ? rc.end_exclusion : 0.1 * t_end;
    return quasi_asymptotic_frequency(tl, 0, 1, iso.period(), iso.frequency(), burn, excl);
}

json frequency_json(const FrequencyEstimate& f, double burn, double excl) {
    json j = {{"c0", record("c0", f.c0, 0.0, true)},
              {"slope", record("c_sigma_slope", f.slope, f.slope_se)},
              {"beta_integral", record("c_sigma_beta_integral", f.beta_integral, f.beta_integral_se)},
              {"window", {f.window_start, f.window_end}},
              {"diagnostics",
               {{"burn_in", burn}, {"end_exclusion", excl}, {"z_agreement", finite_or_null(f.z_agreement)}}}};
    return j;
}

void field_phase(RunContext& ctx, const System& sys) {
    const RunConfig& rc = ctx.cfg.run;
    IsochronMap iso = build_isochron(sys.tube.manifold, *sys.dyn, isochron_options(rc));
    std::vector<KilledPath> paths(rc.phase_paths);
    std::vector<PhaseSeries> series(rc.phase_paths);
    std::vector<ItoCheck> checks(rc.phase_paths);
    parallel_for(rc.phase_paths, rc.workers, [&](std::size_t i) {
        KilledRunOptions ko;
        ko.t_max = rc.t_max;
        ko.snapshot_stride = rc.snapshot_stride;
        ko.seed = *rc.seed;
        ko.path_id = i;
        paths[i] = run_killed(sys.x0, *sys.dyn, sys.tube, ko);
        series[i] = phase_series(paths[i], iso);
        checks[i] = ito_residual_check(paths[i], iso);
    });
    std::ostringstream ps, is;
    ps << "path,t,phase\n";
    is << "path,tau,delta_phase,drift_integral,residual,qv_empirical,qv_predicted\n";
    std::vector<double> qv_emp, qv_pred, residuals;
    std::size_t jumps = 0;
    for (std::size_t i = 0; i < rc.phase_paths; ++i) {
        for (std::size_t k = 0; k < series[i].times.size(); ++k) {
            ps << i << "," << num(series[i].times[k]) << "," << num(series[i].unwrapped_phase[k]) << "\n";
        }
        jumps += series[i].jump_warnings;
        const ItoCheck& c = checks[i];
        double res = c.residual.empty() ? 0.0 : c.residual.back();
        is << i << "," << num(paths[i].tau) << "," << num(c.delta_phase) << "," << num(c.drift_integral) << ","
           << num(res) << "," << num(c.qv_empirical) << "," << num(c.qv_predicted) << "\n";
        qv_emp.push_back(c.qv_empirical);
        qv_pred.push_back(c.qv_predicted);
        residuals.push_back(res);
    }
    ctx.out.csv("phase_series.csv", ps.str());
    ctx.out.csv("ito.csv", is.str());
    double mean_res = residuals.empty() ? 0.0 : mean(residuals);
    double se_res = residuals.size() > 1 ? std::sqrt(sample_variance(residuals) / static_cast<double>(residuals.size())) : 0.0;
    Estimate qv = ratio_of_means(qv_emp, qv_pred);
    double burn = 0.0, excl = 0.0;
    FrequencyEstimate f = run_frequency(rc, sys, iso, burn, excl);
    json j = {{"isochron",
               {{"period", record("period", iso.period(), 0.0, true)},
                {"diagnostics",
                 {{"relax_time", iso.relax_time()},
                  {"equivariance_error", iso.build_equivariance_error()},
                  {"fd_directions", iso.n_directions()}}}}},
              {"ito",
               {{"qv_ratio", record("qv_ratio", qv.value, qv.std_error)},
                {"mean_residual", record("mean_residual", mean_res, se_res)},
                {"diagnostics", {{"paths", rc.phase_paths}, {"phase_jump_warnings", jumps}}}}},
              {"frequency", frequency_json(f, burn, excl)}};
    ctx.out.json_file("phase.json", j);
}

void field_sweep(RunContext& ctx) {
    const ExperimentConfig& cfg = ctx.cfg;
    const RunConfig& rc = cfg.run;
    System base = make_system(cfg, 0.0);
    std::vector<SweepPoint> slope_pts, beta_pts;
    std::ostringstream os;
    os << "sigma,estimator,c,stderr\n";
    std::vector<double> sigmas = rc.sigmas;
    std::sort(sigmas.begin(), sigmas.end());
    for (double sigma : sigmas) {
        System sys;
        sys.dyn = make_dynamics(cfg, sigma);
        sys.tube = base.tube;
        sys.x0 = base.x0;
        IsochronMap iso = build_isochron(sys.tube.manifold, *sys.dyn, isochron_options(rc));
        double burn = 0.0, excl = 0.0;
        FrequencyEstimate f = run_frequency(rc, sys, iso, burn, excl);
        slope_pts.push_back({sigma, f.slope, f.slope_se, "slope"});
        beta_pts.push_back({sigma, f.beta_integral, f.beta_integral_se, "beta_integral"});
        os << num(sigma) << ",slope," << num(f.slope) << "," << num(f.slope_se) << "\n";
        os << num(sigma) << ",beta_integral," << num(f.beta_integral) << "," << num(f.beta_integral_se) << "\n";
    }
    ctx.out.csv("sweep.csv", os.str());
    std::ostringstream ds;
    ds << "estimator,sigma,c,stderr,shift,shift_stderr,quad_coeff,quad_coeff_stderr,departure\n";
    json dj;
    for (auto* pts : {&slope_pts, &beta_pts}) {
        FrequencyDecomposition d = frequency_decomposition(*pts);
        const std::string tag = pts->front().estimator;
        for (const auto& r : d.rows) {
            ds << tag << "," << num(r.sigma) << "," << num(r.c) << "," << num(r.std_error) << "," << num(r.shift)
               << "," << num(r.shift_se) << "," << num(r.quad_coeff) << "," << num(r.quad_coeff_se) << ","
               << num(r.departure) << "\n";
        }
        double c0_se = 0.0;
        for (const auto& p : *pts)
            if (p.sigma == 0.0) c0_se = p.std_error;
        dj[tag] = {{"c0_hat", record("c0_hat", d.c0_hat, d.c0_hat_se)},
                   {"c0_measured", record("c0_measured", d.c0_measured, c0_se)},
                   {"quad_coeff", record("quad_coeff", d.quad_coeff, d.quad_coeff_se)},
                   {"departure_slope", record("departure_slope", d.departure_slope, d.departure_slope_se)}};
    }
    ctx.out.csv("decomposition.csv", ds.str());
    ctx.out.json_file("decomposition.json", dj);
}

// ----------------------------------------------------------- oracle check

bool oracle_check(RunContext& ctx) {
    std::ostringstream os;
    os << "fixture,check,value,tolerance,pass\n";
    json arr = json::array();
    bool all = true;
    auto row = [&](const std::string& fixture, const std::string& check, double value, double tol) {
        bool pass = value <= tol;
        all = all && pass;
        os << fixture << "," << check << "," << num(value) << "," << num(tol) << "," << (pass ? "true" : "false")
           << "\n";
        arr.push_back({{"fixture", fixture}, {"check", check}, {"value", value}, {"exact", true},
                       {"tolerance", tol}, {"pass", pass}});
    };
    for (const auto& name : builtin_chain_names()) {
        SubMarkovMatrix q = builtin_chain(name);
        SpectralData sd = principal_eigen(q);
        row(name, "irreducible", is_irreducible(q) ? 0.0 : 1.0, 0.0);
        row(name, "left_residual", sd.residual_left, 1e-12);
        row(name, "right_residual", sd.residual_right, 1e-12);
        auto alpha = exact_qsd(sd, q.mu);
        std::vector<double> next(q.n, 0.0);
        double mass = 0.0;
        for (std::size_t i = 0; i < q.n; ++i)
            for (std::size_t j = 0; j < q.n; ++j) next[j] += alpha[i] * q(i, j);
        for (double v : next) mass += v;
        double stat = 0.0;
        for (std::size_t j = 0; j < q.n; ++j) stat = std::max(stat, std::abs(next[j] / mass - alpha[j]));
        row(name, "qsd_stationarity", stat, 1e-12);
        auto beta = exact_qed(sd, q.mu);
        auto pm = q_process_matrix(sd, q);
        auto pi = stationary_distribution(pm, q.n);
        double diff = 0.0;
        for (std::size_t i = 0; i < q.n; ++i) diff = std::max(diff, std::abs(pi[i] - beta[i]));
        row(name, "q_process_stationary_vs_qed", diff, 1e-10);
    }
    ctx.out.csv("oracle_check.csv", os.str());
    ctx.out.json_file("oracle_check.json", json{{"all_pass", all}, {"checks", arr}});
    return all;
}

void write_manifest(const fs::path& dir, RunManifest& m) {
    m.files.clear();
    std::vector<fs::path> paths;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (!e.is_regular_file()) continue;
        fs::path rel = fs::relative(e.path(), dir);
        if (rel == "manifest.json") continue;
        paths.push_back(rel);
    }
    std::sort(paths.begin(), paths.end());
    for (const auto& p : paths) m.files.push_back({p.generic_string(), sha256_file((dir / p).string())});
    json files = json::array();
    for (const auto& f : m.files) files.push_back({{"path", f.path}, {"sha256", f.sha256}});
    json j = {{"run_kind", m.run_kind}, {"config_hash", m.config_hash}, {"code_version", m.code_version},
              {"seed", m.seed},         {"start_marker", "started"},   {"end_marker", m.status},
              {"warnings", m.warnings}, {"files", files}};
    std::ofstream out(dir / "manifest.json", std::ios::trunc);
    if (!out) fail(ErrorKind::io_error, "cannot write manifest");
    out << j.dump(2) << "\n";
}

}  // namespace

std::string config_hash(const ExperimentConfig& cfg) { return sha256_hex(canonical_config_json(cfg)); }

int exit_code_for(ErrorKind kind) noexcept { return is_numerical(kind) ? 3 : 2; }

std::string error_record_json(ErrorKind kind, const std::string& message, std::string_view run_kind) {
    json j = {{"error", to_string(kind)},
              {"message", message},
              {"exit_code", exit_code_for(kind)},
              {"run_kind", run_kind}};
    return j.dump();
}

RunManifest run_experiment(const ExperimentConfig& cfg, const RunOptions& opts) {
    require(cfg.run.seed.has_value(), "run: seed is mandatory");
    Output out(cfg.output);
    RunManifest manifest;
    manifest.run_kind = std::string(to_string(cfg.run.kind));
    manifest.config_hash = config_hash(cfg);
    manifest.code_version = std::string(kCodeVersion);
    manifest.seed = *cfg.run.seed;
    manifest.warnings = cfg.warnings;
    RunContext ctx{cfg, opts, out, manifest.config_hash};
    {
        std::ofstream echo(out.dir() / "config.json", std::ios::trunc);
        echo << json::parse(canonical_config_json(cfg)).dump(2) << "\n";
    }
    const RunKind kind = cfg.run.kind;
    const bool fv_kind = kind == RunKind::fleming_viot || kind == RunKind::qsd || kind == RunKind::qed;
    if ((opts.resume_dir || opts.stop_after_step) && !fv_kind) {
        fail(ErrorKind::validation_error, "resume and stop-after apply to fleming_viot, qsd and qed runs only");
    }
    bool completed = true;
    bool oracle_ok = true;
    if (kind == RunKind::oracle_check) {
        oracle_ok = oracle_check(ctx);
    } else if (cfg.model.type == ModelType::chain) {
        SubMarkovMatrix q = make_chain(cfg.model);
        SpectralData sd = principal_eigen(q);
        if (kind == RunKind::survival) chain_survival(ctx, q, sd);
        else if (fv_kind) completed = chain_fv(ctx, q, sd);
        else if (kind == RunKind::q_process) chain_q_process(ctx, q, sd);
    } else if (kind == RunKind::frequency_sweep) {
        field_sweep(ctx);
    } else {
        System sys = make_system(cfg, cfg.model.sigma);
        for (auto& w : sys.warnings) manifest.warnings.push_back(w);
        if (kind == RunKind::survival) field_survival(ctx, sys);
        else if (fv_kind) completed = field_fv(ctx, sys);
        else if (kind == RunKind::phase) field_phase(ctx, sys);
    }
    manifest.status = completed ? "completed" : "interrupted";
    write_manifest(out.dir(), manifest);
    if (!oracle_ok) fail(ErrorKind::not_converged, "oracle_check: at least one fixture check failed");
    return manifest;
}

}  // namespace qpattern
