#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "qpattern/chain.hpp"
#include "qpattern/error.hpp"
#include "qpattern/model.hpp"
#include "qpattern/tube.hpp"

namespace qpattern {

enum class RunKind { survival, fleming_viot, qsd, qed, q_process, phase, frequency_sweep, oracle_check };
enum class ModelType { chain, sde, spde };

std::string_view to_string(RunKind k) noexcept;
std::optional<RunKind> parse_run_kind(std::string_view s) noexcept;
std::string_view to_string(ModelType t) noexcept;

/// One problem found while loading a config: key path, 1-based line (0 when
/// the key is absent), reason.
struct ConfigIssue {
    std::string key;
    int line = 0;
    std::string reason;
};

/// Thrown by load_config; carries every issue found, not just the first.
class ConfigError : public Error {
public:
    ConfigError(ErrorKind kind, std::vector<ConfigIssue> issues);
    const std::vector<ConfigIssue>& issues() const noexcept { return issues_; }

private:
    std::vector<ConfigIssue> issues_;
};

struct ChainModelConfig {
    /// Name of a built-in fixture, or empty when matrix or sde is given.
    std::string builtin;
    std::vector<std::vector<double>> matrix;
    double dt_per_step = 1.0;
    /// Discretized killed SDE (drift polynomial in x).
    std::optional<SdeChainSpec> sde;
    std::string sde_drift;
    std::size_t start_state = 0;
};

struct SdeModelConfig {
    /// "radial_twist" or empty for an explicit drift.
    std::string preset;
    double omega = 6.283185307179586;
    double beta = 0.0;
    std::vector<std::string> drift;
    std::vector<double> noise = {1.0};
    double det_dt = 0.0;
    double contraction_time = 1.0;
    std::vector<double> initial;
};

/// Initial field: kind is front, pulse, constant or file. A pulse raises
/// `component` to `high` on [position - width, position]; with two or more
/// components, component 1 is set to `refractory` on the width behind it so
/// the pulse travels towards +x.
struct InitialFieldConfig {
    std::string kind = "front";
    std::size_t component = 0;
    double position = 0.0;
    double width = 1.0;
    double low = 0.0;
    double high = 1.0;
    double refractory = 0.0;
    std::string path;
};

struct ModelConfig {
    ModelType type = ModelType::chain;
    ChainModelConfig chain;
    SdeModelConfig sde;
    ModelSpec spde;
    std::vector<std::string> spde_reaction;
    InitialFieldConfig initial;
    double sigma = 0.0;
};

struct ManifoldConfig {
    /// wave, cycle, radial_twist or file.
    std::string kind;
    double relax_time = 0.0;
    double measure_time = 0.0;
    double period_guess = 1.0;
    std::size_t n_phase = 512;
    std::size_t section_coord = 0;
    std::string path;
};

struct TubeConfig {
    bool present = false;
    double delta = 0.1;
    DistanceNorm norm = DistanceNorm::sup;
    double validity_radius = 0.0;
    ManifoldConfig manifold;
};

struct RunConfig {
    RunKind kind = RunKind::survival;
    std::optional<std::uint64_t> seed;
    double t_max = 1.0;
    double dt = 0.01;
    std::size_t n_paths = 1000;
    std::size_t n_particles = 1000;
    std::size_t snapshot_stride = 1;
    std::size_t record_stride = 1;
    unsigned workers = 1;
    /// Negative means "derive a default" (10 / gamma for chains).
    double burn_in = -1.0;
    double end_exclusion = -1.0;
    std::size_t checkpoint_every = 0;
    std::vector<double> sigmas;
    std::vector<std::size_t> probes;
    std::size_t q_steps = 10;
    std::size_t phase_paths = 10;
    std::size_t histogram_bins = 30;
    /// Isochron relax horizon override and finite-difference truncation.
    double relax_time = 0.0;
    std::size_t fd_directions = 0;
};

struct OutputConfig {
    std::string directory = "out";
    bool csv = true;
    bool json = true;
};

struct ExperimentConfig {
    std::string source_path;
    ModelConfig model;
    TubeConfig tube;
    RunConfig run;
    OutputConfig output;
    /// Assumption warnings found at load (never fatal).
    std::vector<std::string> warnings;
};

/// Command-line values; each one wins over the file.
struct ConfigOverrides {
    std::optional<RunKind> kind;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out;
    std::optional<unsigned> workers;
};

/// Parses and validates a YAML config with sections model, tube, run and
/// output, applying overrides before validation. Throws ConfigError
/// (ParseError for malformed YAML or unknown keys, ValidationError for bad or
/// missing values) listing every issue with its line.
ExperimentConfig load_config(const std::string& path, const ConfigOverrides& overrides = {});
ExperimentConfig parse_config(const std::string& text, const ConfigOverrides& overrides = {},
                              const std::string& source = "<string>");

/// Canonical JSON of every setting that affects results (worker count and
/// output directory excluded), used for hashing and echoing.
std::string canonical_config_json(const ExperimentConfig& cfg);

/// Builds the sub-Markov matrix of a chain model.
SubMarkovMatrix make_chain(const ModelConfig& m);

}  // namespace qpattern
