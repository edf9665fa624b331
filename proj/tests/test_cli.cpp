#include <doctest.h>

#include <sys/wait.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <nlohmann/json.hpp>
#include <sstream>
#include <string>

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

fs::path scratch_root() {
    static fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "qpattern_cli_test";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

int run_cli(const std::string& args) {
    std::string cmd = std::string(QP_CLI) + " " + args + " > " + (scratch_root() / "stdout.txt").string() + " 2> " +
                      (scratch_root() / "stderr.txt").string();
    int status = std::system(cmd.c_str());
    REQUIRE(WIFEXITED(status));
    return WEXITSTATUS(status);
}

std::string slurp(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

fs::path write_config(const std::string& name, const std::string& text) {
    fs::path p = scratch_root() / (name + ".yaml");
    std::ofstream(p) << text;
    return p;
}

/// Relative path -> bytes for every regular file under dir.
std::map<std::string, std::string> tree(const fs::path& dir) {
    std::map<std::string, std::string> out;
    for (const auto& e : fs::recursive_directory_iterator(dir)) {
        if (e.is_regular_file()) out[fs::relative(e.path(), dir).generic_string()] = slurp(e.path());
    }
    return out;
}

const char* kChainFv = R"(model:
  type: chain
  chain:
    builtin: three_state
run:
  kind: qsd
  seed: 8
  t_max: 40
  n_particles: 300
  checkpoint_every: 10
)";

}  // namespace

TEST_CASE("identical config and seed give identical bytes for any worker count") {
    fs::path cfg = write_config("fv", kChainFv);
    for (const char* kind : {"qsd", "qed", "fleming_viot", "survival"}) {
        fs::path a = scratch_root() / (std::string("w1_") + kind);
        fs::path b = scratch_root() / (std::string("w3_") + kind);
        REQUIRE(run_cli(std::string(kind) + " --config " + cfg.string() + " --out " + a.string() + " --workers 1") ==
                0);
        REQUIRE(run_cli(std::string(kind) + " --config " + cfg.string() + " --out " + b.string() + " --workers 3") ==
                0);
        auto ta = tree(a), tb = tree(b);
        CHECK(ta.size() > 2);
        CHECK(ta == tb);
    }
}

TEST_CASE("the manifest lists every produced file with its digest") {
    fs::path dir = scratch_root() / "w1_qsd";
    json m = json::parse(slurp(dir / "manifest.json"));
    CHECK(m["start_marker"] == "started");
    CHECK(m["end_marker"] == "completed");
    CHECK(m["seed"] == 8);
    CHECK(m["run_kind"] == "qsd");
    auto files = tree(dir);
    files.erase("manifest.json");
    CHECK(m["files"].size() == files.size());
    for (const auto& f : m["files"]) {
        CHECK(files.count(f["path"].get<std::string>()) == 1);
        CHECK(f["sha256"].get<std::string>().size() == 64);
    }
    CHECK(fs::exists(dir / "config.json"));
    CHECK(fs::exists(dir / "checkpoint" / "checkpoint.json"));
}

TEST_CASE("a stopped and resumed run matches a straight run") {
    fs::path cfg = write_config("fv", kChainFv);
    fs::path straight = scratch_root() / "w1_qsd";
    fs::path part = scratch_root() / "part";
    fs::path rest = scratch_root() / "rest";
    CHECK(run_cli("qsd --config " + cfg.string() + " --out " + part.string() + " --stop-after-step 20") == 0);
    CHECK(json::parse(slurp(part / "manifest.json"))["end_marker"] == "interrupted");
    CHECK(run_cli("qsd --config " + cfg.string() + " --out " + rest.string() + " --resume " +
                  (part / "checkpoint").string()) == 0);
    auto ts = tree(straight), tr = tree(rest);
    for (const auto& [name, bytes] : ts) {
        if (name.rfind("checkpoint", 0) == 0) continue;
        CHECK_MESSAGE(tr[name] == bytes, name);
    }

    fs::path other = write_config("fv_other", std::string(kChainFv) + "  record_stride: 2\n");
    CHECK(run_cli("qsd --config " + other.string() + " --out " + (scratch_root() / "bad_resume").string() +
                  " --resume " + (part / "checkpoint").string()) == 2);
    json err = json::parse(slurp(scratch_root() / "bad_resume" / "error.json"));
    CHECK(err["error"] == "ValidationError");
}

TEST_CASE("configuration problems exit 2 with an error record") {
    fs::path no_seed = write_config("no_seed", R"(model:
  type: chain
  chain:
    builtin: three_state
run:
  kind: qsd
  t_max: 40
  n_particles: 300
)");
    fs::path out = scratch_root() / "no_seed_out";
    CHECK(run_cli("qsd --config " + no_seed.string() + " --out " + out.string()) == 2);
    json err = json::parse(slurp(out / "error.json"));
    CHECK(err["error"] == "ValidationError");
    CHECK(err["exit_code"] == 2);
    CHECK(err["run_kind"] == "qsd");
    REQUIRE(err.contains("issues"));
    CHECK(err["issues"][0]["key"] == "run.seed");
    CHECK_FALSE(fs::exists(out / "manifest.json"));
    // The record also goes to stderr as a single JSON line.
    CHECK(json::parse(slurp(scratch_root() / "stderr.txt"))["error"] == "ValidationError");

    CHECK(run_cli("qsd --config " + no_seed.string() + " --seed 4 --out " + out.string()) == 0);
    CHECK_FALSE(fs::exists(out / "error.json"));

    fs::path typo = write_config("typo", std::string(kChainFv) + "  n_partcles: 3\n");
    CHECK(run_cli("qsd --config " + typo.string() + " --out " + (scratch_root() / "typo").string()) == 2);
    CHECK(json::parse(slurp(scratch_root() / "typo" / "error.json"))["error"] == "ParseError");

    CHECK(run_cli("bogus --config " + typo.string()) == 2);
    CHECK(run_cli("qsd --config /nonexistent.yaml") == 2);
    CHECK(run_cli("qsd") == 2);
}

TEST_CASE("numerical failures exit 3") {
    // Every particle dies on the first step: the cloud goes extinct.
    fs::path dead = write_config("dead", R"(model:
  type: chain
  chain:
    matrix: [[0.0, 1e-9], [1e-9, 0.0]]
run:
  kind: fleming_viot
  seed: 1
  t_max: 10
  n_particles: 4
)");
    fs::path out = scratch_root() / "dead_out";
    CHECK(run_cli("fleming_viot --config " + dead.string() + " --out " + out.string()) == 3);
    json err = json::parse(slurp(out / "error.json"));
    CHECK(err["exit_code"] == 3);
    CHECK(err["error"] == "Extinction");
}

TEST_CASE("the shipped sample configs are valid") {
    for (const auto& e : fs::directory_iterator(QP_CONFIG_DIR)) {
        if (e.path().extension() != ".yaml") continue;
        // oracle_check needs no model, so this validates each file cheaply.
        CHECK_MESSAGE(run_cli("oracle_check --config " + e.path().string() + " --out " +
                              (scratch_root() / ("sample_" + e.path().stem().string())).string()) == 0,
                      e.path().string());
    }
}
