#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "qpattern/config.hpp"
#include "qpattern/error.hpp"

namespace qpattern {

inline constexpr std::string_view kCodeVersion = "1.0.0";

struct RunOptions {
    /// Checkpoint directory to continue from (Fleming-Viot run kinds only).
    std::optional<std::string> resume_dir;
    /// Stop once this many steps are done, leaving a checkpoint behind.
    std::optional<std::uint64_t> stop_after_step;
};

struct ProducedFile {
    std::string path;
    std::string sha256;
};

struct RunManifest {
    std::string run_kind;
    std::string config_hash;
    std::string code_version;
    std::uint64_t seed = 0;
    /// "started" while running; "completed" or "interrupted" when written.
    std::string status = "started";
    std::vector<std::string> warnings;
    /// Every file under the output directory except the manifest itself.
    std::vector<ProducedFile> files;
};

/// SHA-256 of canonical_config_json.
std::string config_hash(const ExperimentConfig& cfg);

/// Dispatches on cfg.run.kind, writes the tables and records into the output
/// directory and the manifest last. Outputs depend only on (config, seed).
RunManifest run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {});

/// 2 for configuration and input problems, 3 for numerical failures.
int exit_code_for(ErrorKind kind) noexcept;

/// Machine-readable error record (one JSON object).
std::string error_record_json(ErrorKind kind, const std::string& message, std::string_view run_kind);

}  // namespace qpattern
