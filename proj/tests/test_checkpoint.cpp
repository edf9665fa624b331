#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <nlohmann/json.hpp>
#include <string>
#include <vector>

#include "qpattern/chain.hpp"
#include "qpattern/checkpoint.hpp"
#include "qpattern/ensemble.hpp"
#include "qpattern/error.hpp"

using namespace qpattern;
using namespace std::string_literals;
namespace fs = std::filesystem;

namespace {

ErrorKind kind_of(auto&& fn) {
    try {
        fn();
    } catch (const Error& e) {
        return e.kind();
    }
    return ErrorKind::io_error;
}

fs::path scratch(const std::string& name) {
    fs::path p = fs::temp_directory_path() / ("qpattern_test_" + name);
    fs::remove_all(p);
    return p;
}

std::vector<Observable<std::size_t>> indicators() {
    std::vector<Observable<std::size_t>> obs;
    for (std::size_t s = 0; s < 3; ++s) {
        obs.push_back({"state_" + std::to_string(s), [s](const std::size_t& x) { return x == s ? 1.0 : 0.0; }});
    }
    return obs;
}

}  // namespace

TEST_CASE("byte writer and reader round trip") {
    ByteWriter w;
    w.u64(0xfedcba9876543210ULL);
    w.f64(-0.0);
    w.f64(std::numeric_limits<double>::infinity());
    w.str("hello");
    w.f64s({1.5, 2.5});
    w.u32s({7, 8, 9});
    ByteReader r(w.bytes());
    CHECK(r.u64() == 0xfedcba9876543210ULL);
    double z = r.f64();
    CHECK(z == 0.0);
    CHECK(std::signbit(z));
    CHECK(std::isinf(r.f64()));
    CHECK(r.str() == "hello");
    CHECK(r.f64s() == std::vector<double>{1.5, 2.5});
    CHECK(r.u32s() == std::vector<std::uint32_t>{7, 8, 9});
    CHECK(r.done());
    // Little-endian layout.
    ByteWriter one;
    one.u64(1);
    CHECK(one.bytes()[0] == '\x01');
}

TEST_CASE("truncated or lying payloads are corrupt") {
    ByteWriter w;
    w.f64s({1.0, 2.0, 3.0});
    std::string bytes = w.bytes();
    ByteReader short_reader(std::string_view(bytes).substr(0, bytes.size() - 1));
    CHECK(kind_of([&] { short_reader.f64s(); }) == ErrorKind::corrupt_checkpoint);
    ByteWriter lie;
    lie.u64(1ULL << 60);
    ByteReader r(lie.bytes());
    CHECK(kind_of([&] { r.f64s(); }) == ErrorKind::corrupt_checkpoint);
    ByteReader empty("");
    CHECK(kind_of([&] { empty.u64(); }) == ErrorKind::corrupt_checkpoint);
}

TEST_CASE("checkpoint files round trip and detect tampering") {
    fs::path dir = scratch("ckpt");
    CheckpointManifest m;
    m.run_kind = "qsd";
    m.config_hash = "abc";
    m.seed = 5;
    m.step = 123;
    std::string state = "payload\0with zero"s;
    write_checkpoint(dir.string(), m, state);
    std::string back;
    CheckpointManifest got = read_checkpoint(dir.string(), back);
    CHECK(back == state);
    CHECK(got.run_kind == "qsd");
    CHECK(got.config_hash == "abc");
    CHECK(got.seed == 5);
    CHECK(got.step == 123);
    CHECK(got.state_sha256.size() == 64);

    {
        std::ofstream out(dir / "state.bin", std::ios::binary | std::ios::app);
        out << "x";
    }
    CHECK(kind_of([&] { read_checkpoint(dir.string(), back); }) == ErrorKind::corrupt_checkpoint);

    write_checkpoint(dir.string(), m, state);
    nlohmann::json j;
    {
        std::ifstream in(dir / "checkpoint.json");
        j = nlohmann::json::parse(in);
    }
    j["state_file"] = "../state.bin";
    {
        std::ofstream out(dir / "checkpoint.json", std::ios::trunc);
        out << j.dump();
    }
    CHECK(kind_of([&] { read_checkpoint(dir.string(), back); }) == ErrorKind::corrupt_checkpoint);

    {
        std::ofstream out(dir / "checkpoint.json", std::ios::trunc);
        out << "{not json";
    }
    CHECK(kind_of([&] { read_checkpoint(dir.string(), back); }) == ErrorKind::corrupt_checkpoint);
    fs::remove_all(dir);
    CHECK(kind_of([&] { read_checkpoint(dir.string(), back); }) == ErrorKind::corrupt_checkpoint);
}

TEST_CASE("a Fleming-Viot run resumed from an encoded snapshot matches a straight run") {
    SubMarkovMatrix q = builtin_chain("three_state");
    ChainProcess proc(q);
    FvOptions o;
    o.n_particles = 200;
    o.n_steps = 80;
    o.seed = 11;
    o.record_stride = 3;

    FlemingViot<ChainProcess> straight(proc, indicators(), o);
    straight.start(0);
    FvTimeline a = straight.finish();

    FlemingViot<ChainProcess> first(proc, indicators(), o);
    first.start(0);
    first.run_until(37);
    using Snap = FlemingViot<ChainProcess>::Snapshot;
    std::string bytes = encode_fv_snapshot(first.snapshot());
    Snap decoded = decode_fv_snapshot<Snap>(bytes);
    CHECK(encode_fv_snapshot(decoded) == bytes);

    FlemingViot<ChainProcess> second(proc, indicators(), o);
    second.restore(std::move(decoded));
    CHECK(second.step_index() == 37);
    FvTimeline b = second.finish();

    CHECK(a.cloud_mean == b.cloud_mean);
    CHECK(a.kill_fraction == b.kill_fraction);
    CHECK(a.lineage == b.lineage);
    CHECK(a.lineage_slot == b.lineage_slot);
    CHECK(a.total_events == b.total_events);
    CHECK(a.events.size() == b.events.size());

    std::string broken = bytes;
    broken[0] = 'X';
    CHECK(kind_of([&] { decode_fv_snapshot<Snap>(broken); }) == ErrorKind::corrupt_checkpoint);
    CHECK(kind_of([&] { decode_fv_snapshot<Snap>(bytes + "z"); }) == ErrorKind::corrupt_checkpoint);
    CHECK(kind_of([&] { decode_fv_snapshot<Snap>(bytes.substr(0, bytes.size() / 2)); }) ==
          ErrorKind::corrupt_checkpoint);
}
