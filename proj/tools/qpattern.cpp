#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <stdexcept>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "qpattern/config.hpp"
#include "qpattern/error.hpp"
#include "qpattern/run.hpp"

namespace {

const char* kKinds = "survival, fleming_viot, qsd, qed, q_process, phase, frequency_sweep, oracle_check";

struct Failure {
    qpattern::ErrorKind kind;
    std::string message;
    nlohmann::json issues = nlohmann::json::array();
};

// The record goes to stderr as one JSON line and, when an output directory
// is known, to error.json beside the (absent) results.
int report(const Failure& f, const std::string& run_kind, const std::optional<std::string>& out_dir) {
    nlohmann::json rec = nlohmann::json::parse(qpattern::error_record_json(f.kind, f.message, run_kind));
    if (!f.issues.empty()) rec["issues"] = f.issues;
    std::cerr << rec.dump() << "\n";
    if (out_dir) {
        std::error_code ec;
        std::filesystem::create_directories(*out_dir, ec);
        std::ofstream out(std::filesystem::path(*out_dir) / "error.json", std::ios::trunc);
        if (out) out << rec.dump(2) << "\n";
    }
    return qpattern::exit_code_for(f.kind);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Quasi-stationary pattern simulations"};
    std::string kind_text;
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<std::string> out_dir;
    std::optional<unsigned> workers;
    std::optional<std::string> resume;
    std::optional<std::uint64_t> stop_after;
    app.add_option("run-kind", kind_text, std::string("One of: ") + kKinds)->required();
    app.add_option("--config", config_path, "YAML experiment configuration")->required();
    app.add_option("--seed", seed, "Overrides run.seed");
    app.add_option("--out", out_dir, "Overrides output.directory");
    app.add_option("--workers", workers, "Worker threads; results do not depend on it");
    app.add_option("--resume", resume, "Checkpoint directory to resume from");
    app.add_option("--stop-after-step", stop_after, "Checkpoint and stop after this step");
    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        return report({qpattern::ErrorKind::validation_error, e.what()}, kind_text, std::nullopt);
    }

    std::optional<std::string> known_out = out_dir;
    try {
        qpattern::ConfigOverrides ov;
        ov.kind = qpattern::parse_run_kind(kind_text);
        if (!ov.kind) {
            return report({qpattern::ErrorKind::validation_error,
                           "unknown run kind '" + kind_text + "'; expected one of: " + kKinds},
                          kind_text, known_out);
        }
        ov.seed = seed;
        ov.out = out_dir;
        ov.workers = workers;
        qpattern::ExperimentConfig cfg = qpattern::load_config(config_path, ov);
        known_out = cfg.output.directory;
        for (const auto& w : cfg.warnings) std::cerr << "warning: " << w << "\n";
        qpattern::RunOptions opts;
        opts.resume_dir = resume;
        opts.stop_after_step = stop_after;
        qpattern::RunManifest m = qpattern::run_experiment(cfg, opts);
        std::cout << m.status << ": " << m.files.size() << " files in " << cfg.output.directory << "\n";
        return 0;
    } catch (const qpattern::ConfigError& e) {
        Failure f{e.kind(), e.what()};
        for (const auto& i : e.issues()) f.issues.push_back({{"key", i.key}, {"line", i.line}, {"reason", i.reason}});
        return report(f, kind_text, known_out);
    } catch (const qpattern::Error& e) {
        return report({e.kind(), e.what()}, kind_text, known_out);
    } catch (const std::invalid_argument& e) {
        return report({qpattern::ErrorKind::validation_error, e.what()}, kind_text, known_out);
    } catch (const std::filesystem::filesystem_error& e) {
        return report({qpattern::ErrorKind::io_error, e.what()}, kind_text, known_out);
    } catch (const std::exception& e) {
        return report({qpattern::ErrorKind::not_converged, e.what()}, kind_text, known_out);
    }
}
