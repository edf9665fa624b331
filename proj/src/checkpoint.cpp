#include "qpattern/checkpoint.hpp"

#include <bit>
#include <filesystem>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "qpattern/digest.hpp"

namespace qpattern {

static_assert(std::endian::native == std::endian::little, "checkpoint encoding assumes a little-endian host");

void ByteWriter::u64(std::uint64_t v) {
    char b[8];
    std::memcpy(b, &v, 8);
    buf_.append(b, 8);
}

void ByteWriter::f64(double v) {
    char b[8];
    std::memcpy(b, &v, 8);
    buf_.append(b, 8);
}

void ByteWriter::str(std::string_view s) {
    u64(s.size());
    buf_.append(s.data(), s.size());
}

void ByteWriter::f64s(const std::vector<double>& v) {
    u64(v.size());
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(double));
}

void ByteWriter::u32s(const std::vector<std::uint32_t>& v) {
    u64(v.size());
    buf_.append(reinterpret_cast<const char*>(v.data()), v.size() * sizeof(std::uint32_t));
}

void ByteReader::need(std::size_t n) {
    if (n > data_.size() - pos_) fail(ErrorKind::corrupt_checkpoint, "checkpoint: payload truncated");
}

std::uint64_t ByteReader::u64() {
    need(8);
    std::uint64_t v;
    std::memcpy(&v, data_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

double ByteReader::f64() {
    need(8);
    double v;
    std::memcpy(&v, data_.data() + pos_, 8);
    pos_ += 8;
    return v;
}

std::uint64_t ByteReader::count(std::size_t min_element_size) {
    std::uint64_t n = u64();
    if (min_element_size > 0 && n > (data_.size() - pos_) / min_element_size) {
        fail(ErrorKind::corrupt_checkpoint, "checkpoint: element count exceeds payload");
    }
    return n;
}

std::string ByteReader::str() {
    std::uint64_t n = count(1);
    std::string s(data_.substr(pos_, n));
    pos_ += n;
    return s;
}

std::vector<double> ByteReader::f64s() {
    std::uint64_t n = count(sizeof(double));
    std::vector<double> v(n);
    std::memcpy(v.data(), data_.data() + pos_, n * sizeof(double));
    pos_ += n * sizeof(double);
    return v;
}

std::vector<std::uint32_t> ByteReader::u32s() {
    std::uint64_t n = count(sizeof(std::uint32_t));
    std::vector<std::uint32_t> v(n);
    std::memcpy(v.data(), data_.data() + pos_, n * sizeof(std::uint32_t));
    pos_ += n * sizeof(std::uint32_t);
    return v;
}

void encode_timeline(ByteWriter& w, const FvTimeline& tl) {
    w.f64(tl.dt);
    w.u64(tl.n_particles);
    w.u64(tl.n_steps);
    w.u64(tl.record_stride);
    w.u64(tl.observable_names.size());
    for (const auto& n : tl.observable_names) w.str(n);
    w.f64s(tl.kill_fraction);
    w.u64(tl.events.size());
    for (const auto& e : tl.events) {
        w.u64(e.step);
        w.u64(e.dead);
        w.u64(e.donor);
    }
    w.u64(tl.total_events);
    w.f64s(tl.record_times);
    w.u64(tl.cloud_mean.size());
    for (const auto& m : tl.cloud_mean) w.f64s(m);
    w.u64(tl.phase_jump_warnings);
}

FvTimeline decode_timeline(ByteReader& r) {
    FvTimeline tl;
    tl.dt = r.f64();
    tl.n_particles = r.u64();
    tl.n_steps = r.u64();
    tl.record_stride = r.u64();
    std::uint64_t k = r.count(8);
    for (std::uint64_t i = 0; i < k; ++i) tl.observable_names.push_back(r.str());
    tl.kill_fraction = r.f64s();
    std::uint64_t ne = r.count(24);
    tl.events.resize(ne);
    for (auto& e : tl.events) {
        e.step = r.u64();
        e.dead = static_cast<std::uint32_t>(r.u64());
        e.donor = static_cast<std::uint32_t>(r.u64());
    }
    tl.total_events = r.u64();
    tl.record_times = r.f64s();
    std::uint64_t nr = r.count(8);
    tl.cloud_mean.resize(nr);
    for (auto& m : tl.cloud_mean) m = r.f64s();
    tl.phase_jump_warnings = r.u64();
    return tl;
}

void write_checkpoint(const std::string& dir, CheckpointManifest manifest, const std::string& state) {
    namespace fs = std::filesystem;
    fs::create_directories(dir);
    const std::string state_path = (fs::path(dir) / manifest.state_file).string();
    {
        std::ofstream out(state_path, std::ios::binary | std::ios::trunc);
        if (!out) fail(ErrorKind::io_error, "cannot write '" + state_path + "'");
        out.write(state.data(), static_cast<std::streamsize>(state.size()));
        if (!out) fail(ErrorKind::io_error, "short write to '" + state_path + "'");
    }
    manifest.state_sha256 = sha256_hex(state);
    nlohmann::json j = {{"format", manifest.format},         {"run_kind", manifest.run_kind},
                        {"config_hash", manifest.config_hash}, {"seed", manifest.seed},
                        {"step", manifest.step},             {"state_file", manifest.state_file},
                        {"state_sha256", manifest.state_sha256}};
    const std::string mpath = (fs::path(dir) / "checkpoint.json").string();
    std::ofstream out(mpath, std::ios::trunc);
    if (!out) fail(ErrorKind::io_error, "cannot write '" + mpath + "'");
    out << j.dump(2) << "\n";
}

CheckpointManifest read_checkpoint(const std::string& dir, std::string& state) {
    namespace fs = std::filesystem;
    const std::string mpath = (fs::path(dir) / "checkpoint.json").string();
    std::ifstream in(mpath);
    if (!in) fail(ErrorKind::corrupt_checkpoint, "checkpoint manifest '" + mpath + "' is missing");
    CheckpointManifest m;
    try {
        nlohmann::json j = nlohmann::json::parse(in);
        m.format = j.at("format").get<std::string>();
        m.run_kind = j.at("run_kind").get<std::string>();
        m.config_hash = j.at("config_hash").get<std::string>();
        m.seed = j.at("seed").get<std::uint64_t>();
        m.step = j.at("step").get<std::uint64_t>();
        m.state_file = j.at("state_file").get<std::string>();
        m.state_sha256 = j.at("state_sha256").get<std::string>();
    } catch (const nlohmann::json::exception& e) {
        fail(ErrorKind::corrupt_checkpoint, std::string("checkpoint manifest unreadable: ") + e.what());
    }
    if (m.format != CheckpointManifest{}.format) {
        fail(ErrorKind::corrupt_checkpoint, "checkpoint format '" + m.format + "' is not supported");
    }
    if (m.state_file.find('/') != std::string::npos || m.state_file.find("..") != std::string::npos) {
        fail(ErrorKind::corrupt_checkpoint, "checkpoint state file must live in the checkpoint directory");
    }
    const std::string spath = (fs::path(dir) / m.state_file).string();
    std::ifstream sin(spath, std::ios::binary);
    if (!sin) fail(ErrorKind::corrupt_checkpoint, "checkpoint state '" + spath + "' is missing");
    std::ostringstream ss;
    ss << sin.rdbuf();
    state = ss.str();
    if (sha256_hex(state) != m.state_sha256) {
        fail(ErrorKind::corrupt_checkpoint, "checkpoint state digest does not match its manifest");
    }
    return m;
}

}  // namespace qpattern
