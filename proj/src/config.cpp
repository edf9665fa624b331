#include "qpattern/config.hpp"

#include <yaml-cpp/yaml.h>

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include <json.hpp>

#include "qpattern/polynomial.hpp"

namespace qpattern {

namespace {

constexpr std::pair<RunKind, std::string_view> kRunKinds[] = {
    {RunKind::survival, "survival"},
    {RunKind::fleming_viot, "fleming_viot"},
    {RunKind::qsd, "qsd"},
    {RunKind::qed, "qed"},
    {RunKind::q_process, "q_process"},
    {RunKind::phase, "phase"},
    {RunKind::frequency_sweep, "frequency_sweep"},
    {RunKind::oracle_check, "oracle_check"},
};

std::string describe(const std::vector<ConfigIssue>& issues) {
    std::ostringstream os;
    for (std::size_t i = 0; i < issues.size(); ++i) {
        if (i) os << "; ";
        os << issues[i].key;
        if (issues[i].line > 0) os << " (line " << issues[i].line << ")";
        os << ": " << issues[i].reason;
    }
    return os.str();
}

int line_of(const YAML::Node& n) {
    auto m = n.Mark();
    return m.line >= 0 ? m.line + 1 : 0;
}

// Collects issues while reading; nothing throws until finish().
class Reader {
public:
    std::vector<ConfigIssue> parse_issues;
    std::vector<ConfigIssue> value_issues;

    void unknown_keys(const YAML::Node& section, const std::string& prefix, const std::set<std::string>& allowed) {
        if (!section || section.IsNull()) return;
        if (!section.IsMap()) {
            parse_issues.push_back({prefix, line_of(section), "expected a mapping"});
            return;
        }
        for (const auto& kv : section) {
            auto key = kv.first.as<std::string>();
            if (!allowed.count(key)) parse_issues.push_back({prefix + "." + key, line_of(kv.first), "unknown key"});
        }
    }

    template <class T>
    bool get(const YAML::Node& section, const std::string& prefix, const std::string& key, T& out) {
        if (!section || !section.IsMap()) return false;
        YAML::Node n = section[key];
        if (!n) return false;
        try {
            out = n.as<T>();
            return true;
        } catch (const YAML::Exception&) {
            parse_issues.push_back({prefix + "." + key, line_of(n), "cannot convert '" + text_of(n) + "'"});
            return false;
        }
    }

    /// Accepts a scalar as a one-element list.
    template <class T>
    bool get_list(const YAML::Node& section, const std::string& prefix, const std::string& key, std::vector<T>& out) {
        if (!section || !section.IsMap()) return false;
        YAML::Node n = section[key];
        if (!n) return false;
        try {
            if (n.IsScalar()) {
                out = {n.as<T>()};
            } else {
                out = n.as<std::vector<T>>();
            }
            return true;
        } catch (const YAML::Exception&) {
            parse_issues.push_back({prefix + "." + key, line_of(n), "expected a list"});
            return false;
        }
    }

    void invalid(const YAML::Node& section, const std::string& prefix, const std::string& key, std::string reason) {
        int line = 0;
        if (section && section.IsMap() && section[key]) line = line_of(section[key]);
        value_issues.push_back({prefix.empty() ? key : prefix + "." + key, line, std::move(reason)});
    }

private:
    static std::string text_of(const YAML::Node& n) {
        if (n.IsScalar()) return n.Scalar();
        std::ostringstream os;
        os << n;
        return os.str();
    }
};

YAML::Node child(const YAML::Node& n, const std::string& key) {
    if (!n || !n.IsMap()) return YAML::Node(YAML::NodeType::Undefined);
    return n[key];
}

}  // namespace

ConfigError::ConfigError(ErrorKind kind, std::vector<ConfigIssue> issues)
    : Error(kind, describe(issues)), issues_(std::move(issues)) {}

std::string_view to_string(RunKind k) noexcept {
    for (auto [kind, name] : kRunKinds)
        if (kind == k) return name;
    return "unknown";
}

std::optional<RunKind> parse_run_kind(std::string_view s) noexcept {
    for (auto [kind, name] : kRunKinds)
        if (name == s) return kind;
    return std::nullopt;
}

std::string_view to_string(ModelType t) noexcept {
    switch (t) {
        case ModelType::chain: return "chain";
        case ModelType::sde: return "sde";
        case ModelType::spde: return "spde";
    }
    return "unknown";
}

ExperimentConfig load_config(const std::string& path, const ConfigOverrides& overrides) {
    std::ifstream in(path);
    if (!in) throw ConfigError(ErrorKind::io_error, {{"config", 0, "cannot open '" + path + "'"}});
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config(ss.str(), overrides, path);
}

ExperimentConfig parse_config(const std::string& text, const ConfigOverrides& overrides, const std::string& source) {
    YAML::Node root;
    try {
        root = YAML::Load(text);
    } catch (const YAML::ParserException& e) {
        throw ConfigError(ErrorKind::parse_error, {{"config", e.mark.line + 1, e.msg}});
    }
    if (!root || !root.IsMap()) {
        throw ConfigError(ErrorKind::parse_error, {{"config", 0, "top level must be a mapping of sections"}});
    }
    Reader r;
    ExperimentConfig cfg;
    cfg.source_path = source;
    r.unknown_keys(root, "config", {"model", "tube", "run", "output"});

    // ---- run
    YAML::Node run = root["run"];
    r.unknown_keys(run, "run",
                   {"kind", "seed", "t_max", "dt", "n_paths", "n_particles", "snapshot_stride", "record_stride",
                    "workers", "burn_in", "end_exclusion", "checkpoint_every", "sigmas", "probes", "q_steps",
                    "phase_paths", "histogram_bins", "relax_time", "fd_directions"});
    RunConfig& rc = cfg.run;
    std::string kind_text;
    bool have_kind = false;
    if (r.get(run, "run", "kind", kind_text)) {
        if (auto k = parse_run_kind(kind_text)) {
            rc.kind = *k;
            have_kind = true;
        } else {
            r.invalid(run, "run", "kind", "unknown run kind '" + kind_text + "'");
        }
    }
    if (overrides.kind) {
        rc.kind = *overrides.kind;
        have_kind = true;
    }
    if (!have_kind) r.invalid(run, "run", "kind", "missing run kind");
    std::uint64_t seed = 0;
    if (r.get(run, "run", "seed", seed)) rc.seed = seed;
    if (overrides.seed) rc.seed = overrides.seed;
    if (!rc.seed) r.invalid(run, "run", "seed", "seed is mandatory (no clock-based default)");
    r.get(run, "run", "t_max", rc.t_max);
    r.get(run, "run", "dt", rc.dt);
    r.get(run, "run", "n_paths", rc.n_paths);
    r.get(run, "run", "n_particles", rc.n_particles);
    r.get(run, "run", "snapshot_stride", rc.snapshot_stride);
    r.get(run, "run", "record_stride", rc.record_stride);
    r.get(run, "run", "workers", rc.workers);
    if (overrides.workers) rc.workers = *overrides.workers;
    r.get(run, "run", "burn_in", rc.burn_in);
    r.get(run, "run", "end_exclusion", rc.end_exclusion);
    r.get(run, "run", "checkpoint_every", rc.checkpoint_every);
    r.get_list(run, "run", "sigmas", rc.sigmas);
    r.get_list(run, "run", "probes", rc.probes);
    r.get(run, "run", "q_steps", rc.q_steps);
    r.get(run, "run", "phase_paths", rc.phase_paths);
    r.get(run, "run", "histogram_bins", rc.histogram_bins);
    r.get(run, "run", "relax_time", rc.relax_time);
    r.get(run, "run", "fd_directions", rc.fd_directions);
    if (!(rc.t_max > 0.0)) r.invalid(run, "run", "t_max", "must be positive");
    if (!(rc.dt > 0.0)) r.invalid(run, "run", "dt", "must be positive");
    if (rc.n_paths < 1) r.invalid(run, "run", "n_paths", "must be >= 1");
    if (rc.n_particles < 2) r.invalid(run, "run", "n_particles", "must be >= 2");
    if (rc.snapshot_stride < 1) r.invalid(run, "run", "snapshot_stride", "must be >= 1");
    if (rc.record_stride < 1) r.invalid(run, "run", "record_stride", "must be >= 1");
    if (rc.workers < 1) r.invalid(run, "run", "workers", "must be >= 1");
    if (rc.q_steps < 1) r.invalid(run, "run", "q_steps", "must be >= 1");
    if (rc.histogram_bins < 1) r.invalid(run, "run", "histogram_bins", "must be >= 1");
    for (double s : rc.sigmas)
        if (!(s >= 0.0)) r.invalid(run, "run", "sigmas", "sigma values must be >= 0");

    // ---- model
    YAML::Node model = root["model"];
    r.unknown_keys(model, "model", {"type", "sigma", "chain", "sde", "spde"});
    ModelConfig& mc = cfg.model;
    std::string type = "chain";
    bool have_model = static_cast<bool>(model);
    if (r.get(model, "model", "type", type)) {
        if (type == "chain") mc.type = ModelType::chain;
        else if (type == "sde") mc.type = ModelType::sde;
        else if (type == "spde") mc.type = ModelType::spde;
        else r.invalid(model, "model", "type", "expected chain, sde or spde");
    } else if (have_model) {
        r.invalid(model, "model", "type", "missing model type");
    }
    r.get(model, "model", "sigma", mc.sigma);
    if (!(mc.sigma >= 0.0)) r.invalid(model, "model", "sigma", "must be >= 0");

    YAML::Node chain = child(model, "chain");
    r.unknown_keys(chain, "model.chain", {"builtin", "matrix", "dt_per_step", "start_state", "sde"});
    r.get(chain, "model.chain", "builtin", mc.chain.builtin);
    r.get(chain, "model.chain", "matrix", mc.chain.matrix);
    r.get(chain, "model.chain", "dt_per_step", mc.chain.dt_per_step);
    r.get(chain, "model.chain", "start_state", mc.chain.start_state);
    YAML::Node csde = child(chain, "sde");
    r.unknown_keys(csde, "model.chain.sde", {"drift", "sigma", "lo", "hi", "n", "dt", "edges"});
    if (csde) {
        SdeChainSpec s;
        std::string edges = "kill";
        r.get(csde, "model.chain.sde", "drift", mc.chain.sde_drift);
        r.get(csde, "model.chain.sde", "sigma", s.sigma);
        r.get(csde, "model.chain.sde", "lo", s.lo);
        r.get(csde, "model.chain.sde", "hi", s.hi);
        r.get(csde, "model.chain.sde", "n", s.n);
        r.get(csde, "model.chain.sde", "dt", s.dt);
        r.get(csde, "model.chain.sde", "edges", edges);
        if (edges == "kill") s.edges = EdgeBehavior::kill;
        else if (edges == "reflect") s.edges = EdgeBehavior::reflect;
        else r.invalid(csde, "model.chain.sde", "edges", "expected kill or reflect");
        if (mc.chain.sde_drift.empty()) r.invalid(csde, "model.chain.sde", "drift", "missing drift polynomial in x");
        mc.chain.sde = s;
    }
    if (have_model && mc.type == ModelType::chain) {
        int sources = !mc.chain.builtin.empty() + !mc.chain.matrix.empty() + mc.chain.sde.has_value();
        if (sources != 1) r.invalid(model, "model", "chain", "give exactly one of builtin, matrix or sde");
        if (!mc.chain.builtin.empty()) {
            auto names = builtin_chain_names();
            if (std::find(names.begin(), names.end(), mc.chain.builtin) == names.end()) {
                r.invalid(chain, "model.chain", "builtin", "unknown fixture '" + mc.chain.builtin + "'");
            }
        }
    }

    YAML::Node sde = child(model, "sde");
    r.unknown_keys(sde, "model.sde",
                   {"preset", "omega", "beta", "drift", "noise", "det_dt", "contraction_time", "initial"});
    r.get(sde, "model.sde", "preset", mc.sde.preset);
    r.get(sde, "model.sde", "omega", mc.sde.omega);
    r.get(sde, "model.sde", "beta", mc.sde.beta);
    r.get_list(sde, "model.sde", "drift", mc.sde.drift);
    r.get_list(sde, "model.sde", "noise", mc.sde.noise);
    r.get(sde, "model.sde", "det_dt", mc.sde.det_dt);
    r.get(sde, "model.sde", "contraction_time", mc.sde.contraction_time);
    r.get_list(sde, "model.sde", "initial", mc.sde.initial);
    if (have_model && mc.type == ModelType::sde) {
        if (!sde) r.invalid(model, "model", "sde", "missing sde block");
        if (!mc.sde.preset.empty() && mc.sde.preset != "radial_twist") {
            r.invalid(sde, "model.sde", "preset", "unknown preset '" + mc.sde.preset + "'");
        }
        if (mc.sde.preset.empty() && mc.sde.drift.empty()) r.invalid(sde, "model.sde", "drift", "missing drift");
        std::size_t dim = mc.sde.preset == "radial_twist" ? 2 : mc.sde.drift.size();
        if (mc.sde.preset == "radial_twist" && !(mc.sde.omega > 0.0)) {
            r.invalid(sde, "model.sde", "omega", "must be positive");
        }
        if (mc.sde.initial.empty() && mc.sde.preset == "radial_twist") mc.sde.initial = {1.0, 0.0};
        if (mc.sde.initial.size() != dim) r.invalid(sde, "model.sde", "initial", "needs one value per component");
        if (mc.sde.noise.size() != 1 && mc.sde.noise.size() != dim * dim) {
            r.invalid(sde, "model.sde", "noise", "needs 1 or D*D entries");
        }
        if (!(mc.sde.contraction_time > 0.0)) r.invalid(sde, "model.sde", "contraction_time", "must be positive");
        if (mc.sde.det_dt < 0.0) r.invalid(sde, "model.sde", "det_dt", "must be >= 0");
    }

    YAML::Node spde = child(model, "spde");
    r.unknown_keys(spde, "model.spde",
                   {"n_comp", "n_grid", "length", "boundary", "diffusion", "damping", "reaction", "b", "kappa_bound",
                    "dealias", "initial"});
    ModelSpec& ms = mc.spde;
    std::string boundary = "periodic";
    r.get(spde, "model.spde", "n_comp", ms.grid.n_comp);
    r.get(spde, "model.spde", "n_grid", ms.grid.n_grid);
    r.get(spde, "model.spde", "length", ms.grid.length);
    r.get(spde, "model.spde", "boundary", boundary);
    r.get_list(spde, "model.spde", "diffusion", ms.diffusion);
    r.get_list(spde, "model.spde", "damping", ms.damping);
    r.get_list(spde, "model.spde", "reaction", mc.spde_reaction);
    r.get_list(spde, "model.spde", "b", ms.b_multipliers);
    double kappa = 0.0;
    if (r.get(spde, "model.spde", "kappa_bound", kappa)) ms.kappa_bound = kappa;
    r.get(spde, "model.spde", "dealias", ms.dealias);
    YAML::Node init = child(spde, "initial");
    r.unknown_keys(init, "model.spde.initial", {"kind", "component", "position", "width", "low", "high", "refractory", "path"});
    r.get(init, "model.spde.initial", "kind", mc.initial.kind);
    r.get(init, "model.spde.initial", "component", mc.initial.component);
    r.get(init, "model.spde.initial", "position", mc.initial.position);
    r.get(init, "model.spde.initial", "width", mc.initial.width);
    r.get(init, "model.spde.initial", "low", mc.initial.low);
    r.get(init, "model.spde.initial", "high", mc.initial.high);
    r.get(init, "model.spde.initial", "refractory", mc.initial.refractory);
    r.get(init, "model.spde.initial", "path", mc.initial.path);
    if (have_model && mc.type == ModelType::spde) {
        if (boundary == "periodic") ms.grid.boundary = Boundary::periodic;
        else if (boundary == "dirichlet") ms.grid.boundary = Boundary::dirichlet;
        else r.invalid(spde, "model.spde", "boundary", "expected periodic or dirichlet");
        ms.sigma = mc.sigma;
        if (mc.spde_reaction.size() != ms.grid.n_comp) {
            r.invalid(spde, "model.spde", "reaction", "needs one polynomial per component");
        } else {
            std::vector<std::vector<Monomial>> terms;
            for (std::size_t c = 0; c < ms.grid.n_comp; ++c) {
                try {
                    terms.push_back(Polynomial::parse_component(mc.spde_reaction[c], ms.grid.n_comp));
                } catch (const Error& e) {
                    r.invalid(spde, "model.spde", "reaction", e.what());
                }
            }
            if (terms.size() == ms.grid.n_comp) ms.reaction = Polynomial(ms.grid.n_comp, std::move(terms));
        }
        try {
            ms.validate();
        } catch (const Error& e) {
            r.invalid(spde, "model.spde", "", e.what());
        }
        const std::set<std::string> kinds = {"front", "pulse", "constant", "file"};
        if (!kinds.count(mc.initial.kind)) {
            r.invalid(init, "model.spde.initial", "kind", "expected front, pulse, constant or file");
        }
        if (mc.initial.component >= ms.grid.n_comp) {
            r.invalid(init, "model.spde.initial", "component", "out of range");
        }
        if (mc.initial.kind == "file" && mc.initial.path.empty()) {
            r.invalid(init, "model.spde.initial", "path", "missing file path");
        }
        if (!(mc.initial.width > 0.0)) r.invalid(init, "model.spde.initial", "width", "must be positive");
        if (ms.kappa_bound) {
            auto rep = validate_assumptions(ms, ms.kappa_bound);
            for (auto& w : rep.warnings) cfg.warnings.push_back(w);
        }
    }

    // ---- tube
    YAML::Node tube = root["tube"];
    r.unknown_keys(tube, "tube", {"delta", "norm", "validity_radius", "manifold"});
    TubeConfig& tc = cfg.tube;
    tc.present = static_cast<bool>(tube);
    r.get(tube, "tube", "delta", tc.delta);
    std::string norm = "sup";
    r.get(tube, "tube", "norm", norm);
    if (norm == "sup") tc.norm = DistanceNorm::sup;
    else if (norm == "l2") tc.norm = DistanceNorm::l2;
    else r.invalid(tube, "tube", "norm", "expected sup or l2");
    r.get(tube, "tube", "validity_radius", tc.validity_radius);
    YAML::Node man = child(tube, "manifold");
    r.unknown_keys(man, "tube.manifold",
                   {"kind", "relax_time", "measure_time", "period_guess", "n_phase", "section_coord", "path"});
    r.get(man, "tube.manifold", "kind", tc.manifold.kind);
    r.get(man, "tube.manifold", "relax_time", tc.manifold.relax_time);
    r.get(man, "tube.manifold", "measure_time", tc.manifold.measure_time);
    r.get(man, "tube.manifold", "period_guess", tc.manifold.period_guess);
    r.get(man, "tube.manifold", "n_phase", tc.manifold.n_phase);
    r.get(man, "tube.manifold", "section_coord", tc.manifold.section_coord);
    r.get(man, "tube.manifold", "path", tc.manifold.path);
    if (tc.present) {
        if (!(tc.delta > 0.0)) r.invalid(tube, "tube", "delta", "must be positive");
        if (tc.validity_radius < 0.0) r.invalid(tube, "tube", "validity_radius", "must be >= 0");
        const std::set<std::string> kinds = {"wave", "cycle", "radial_twist", "file"};
        if (!kinds.count(tc.manifold.kind)) {
            r.invalid(man, "tube.manifold", "kind", "expected wave, cycle, radial_twist or file");
        }
        if (tc.manifold.kind == "file" && tc.manifold.path.empty()) {
            r.invalid(man, "tube.manifold", "path", "missing manifold file");
        }
        if (tc.manifold.kind == "wave" && mc.type != ModelType::spde) {
            r.invalid(man, "tube.manifold", "kind", "wave manifolds need an spde model");
        }
        if (tc.manifold.kind == "radial_twist" && mc.sde.preset != "radial_twist") {
            r.invalid(man, "tube.manifold", "kind", "radial_twist manifold needs the radial_twist sde preset");
        }
    }

    // ---- output
    YAML::Node out = root["output"];
    r.unknown_keys(out, "output", {"directory", "formats"});
    r.get(out, "output", "directory", cfg.output.directory);
    if (overrides.out) cfg.output.directory = *overrides.out;
    std::vector<std::string> formats;
    if (r.get_list(out, "output", "formats", formats)) {
        cfg.output.csv = cfg.output.json = false;
        for (const auto& f : formats) {
            if (f == "csv") cfg.output.csv = true;
            else if (f == "json") cfg.output.json = true;
            else r.invalid(out, "output", "formats", "unknown format '" + f + "'");
        }
    }

    // ---- cross-section requirements by run kind
    if (have_kind && rc.kind != RunKind::oracle_check) {
        if (!have_model) r.invalid(root, "", "model", "missing model section");
        bool chain_model = mc.type == ModelType::chain;
        if (rc.kind == RunKind::q_process && !chain_model) {
            r.invalid(model, "model", "type", "q_process runs need a chain model (phi is taken from the oracle)");
        }
        if ((rc.kind == RunKind::phase || rc.kind == RunKind::frequency_sweep) && chain_model) {
            r.invalid(model, "model", "type", "phase runs need an sde or spde model");
        }
        if (!chain_model && !tc.present) r.invalid(root, "", "tube", "sde and spde runs need a tube section");
        if (rc.kind == RunKind::frequency_sweep) {
            std::set<double> distinct(rc.sigmas.begin(), rc.sigmas.end());
            if (distinct.size() < 4 || !distinct.count(0.0)) {
                r.invalid(run, "run", "sigmas", "need at least 4 distinct values including 0");
            }
        }
    }

    if (!r.parse_issues.empty()) {
        auto all = r.parse_issues;
        all.insert(all.end(), r.value_issues.begin(), r.value_issues.end());
        throw ConfigError(ErrorKind::parse_error, all);
    }
    if (!r.value_issues.empty()) throw ConfigError(ErrorKind::validation_error, r.value_issues);
    return cfg;
}

std::string canonical_config_json(const ExperimentConfig& cfg) {
    using nlohmann::json;
    json j;
    const ModelConfig& m = cfg.model;
    j["model"]["type"] = to_string(m.type);
    j["model"]["sigma"] = m.sigma;
    if (m.type == ModelType::chain) {
        j["model"]["chain"]["builtin"] = m.chain.builtin;
        j["model"]["chain"]["matrix"] = m.chain.matrix;
        j["model"]["chain"]["dt_per_step"] = m.chain.dt_per_step;
        j["model"]["chain"]["start_state"] = m.chain.start_state;
        if (m.chain.sde) {
            const auto& s = *m.chain.sde;
            j["model"]["chain"]["sde"] = {{"drift", m.chain.sde_drift}, {"sigma", s.sigma}, {"lo", s.lo},
                                          {"hi", s.hi},          {"n", s.n},         {"dt", s.dt},
                                          {"edges", s.edges == EdgeBehavior::kill ? "kill" : "reflect"}};
        }
    } else if (m.type == ModelType::sde) {
        j["model"]["sde"] = {{"preset", m.sde.preset}, {"omega", m.sde.omega},
                             {"beta", m.sde.beta},     {"drift", m.sde.drift},
                             {"noise", m.sde.noise},   {"det_dt", m.sde.det_dt},
                             {"contraction_time", m.sde.contraction_time}, {"initial", m.sde.initial}};
    } else {
        const ModelSpec& s = m.spde;
        j["model"]["spde"] = {{"n_comp", s.grid.n_comp},
                              {"n_grid", s.grid.n_grid},
                              {"length", s.grid.length},
                              {"boundary", s.grid.boundary == Boundary::periodic ? "periodic" : "dirichlet"},
                              {"diffusion", s.diffusion},
                              {"damping", s.damping},
                              {"reaction", s.reaction.to_string()},
                              {"b", s.b_multipliers},
                              {"dealias", s.dealias}};
        if (s.kappa_bound) j["model"]["spde"]["kappa_bound"] = *s.kappa_bound;
        j["model"]["spde"]["initial"] = {{"kind", m.initial.kind},   {"component", m.initial.component},
                                         {"position", m.initial.position}, {"width", m.initial.width},
                                         {"low", m.initial.low},     {"high", m.initial.high},
                                         {"refractory", m.initial.refractory},
                                         {"path", m.initial.path}};
    }
    if (cfg.tube.present) {
        const TubeConfig& t = cfg.tube;
        j["tube"] = {{"delta", t.delta},
                     {"norm", t.norm == DistanceNorm::sup ? "sup" : "l2"},
                     {"validity_radius", t.validity_radius},
                     {"manifold",
                      {{"kind", t.manifold.kind},
                       {"relax_time", t.manifold.relax_time},
                       {"measure_time", t.manifold.measure_time},
                       {"period_guess", t.manifold.period_guess},
                       {"n_phase", t.manifold.n_phase},
                       {"section_coord", t.manifold.section_coord},
                       {"path", t.manifold.path}}}};
    }
    const RunConfig& r = cfg.run;
    j["run"] = {{"kind", to_string(r.kind)},
                {"seed", r.seed.value_or(0)},
                {"t_max", r.t_max},
                {"dt", r.dt},
                {"n_paths", r.n_paths},
                {"n_particles", r.n_particles},
                {"snapshot_stride", r.snapshot_stride},
                {"record_stride", r.record_stride},
                {"burn_in", r.burn_in},
                {"end_exclusion", r.end_exclusion},
                {"checkpoint_every", r.checkpoint_every},
                {"sigmas", r.sigmas},
                {"probes", r.probes},
                {"q_steps", r.q_steps},
                {"phase_paths", r.phase_paths},
                {"histogram_bins", r.histogram_bins},
                {"relax_time", r.relax_time},
                {"fd_directions", r.fd_directions}};
    j["output"] = {{"csv", cfg.output.csv}, {"json", cfg.output.json}};
    return j.dump();
}

SubMarkovMatrix make_chain(const ModelConfig& m) {
    require(m.type == ModelType::chain, "make_chain: model is not a chain");
    SubMarkovMatrix q;
    if (!m.chain.builtin.empty()) {
        q = builtin_chain(m.chain.builtin);
    } else if (!m.chain.matrix.empty()) {
        q = SubMarkovMatrix::from_rows(m.chain.matrix, m.chain.dt_per_step);
    } else {
        require(m.chain.sde.has_value(), "make_chain: no chain source");
        SdeChainSpec s = *m.chain.sde;
        auto poly = std::make_shared<Polynomial>(1, std::vector<std::vector<Monomial>>{
                                                        Polynomial::parse_component(m.chain.sde_drift, 1)});
        s.drift = [poly](double x) {
            double in[1] = {x}, out[1];
            poly->evaluate(in, out);
            return out[0];
        };
        q = discretize_sde_to_chain(s);
    }
    require(m.chain.start_state < q.n, "chain: start_state out of range");
    return q;
}

}  // namespace qpattern
