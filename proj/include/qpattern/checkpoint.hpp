#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <string_view>
#include <vector>

#include "qpattern/ensemble.hpp"
#include "qpattern/error.hpp"

namespace qpattern {

/// Little-endian byte encoder for checkpoint payloads.
class ByteWriter {
public:
    void u64(std::uint64_t v);
    void f64(double v);
    void str(std::string_view s);
    void f64s(const std::vector<double>& v);
    void u32s(const std::vector<std::uint32_t>& v);
    const std::string& bytes() const noexcept { return buf_; }

private:
    std::string buf_;
};

/// Decoder; any overrun or malformed count is a CorruptCheckpoint.
class ByteReader {
public:
    explicit ByteReader(std::string_view bytes) : data_(bytes) {}
    std::uint64_t u64();
    double f64();
    std::string str();
    std::vector<double> f64s();
    std::vector<std::uint32_t> u32s();
    bool done() const noexcept { return pos_ == data_.size(); }
    /// Guards element counts against the bytes actually left.
    std::uint64_t count(std::size_t min_element_size);

private:
    void need(std::size_t n);
    std::string_view data_;
    std::size_t pos_ = 0;
};

struct CheckpointManifest {
    std::string format = "qpattern-checkpoint-1";
    std::string run_kind;
    std::string config_hash;
    std::uint64_t seed = 0;
    std::uint64_t step = 0;
    std::string state_file = "state.bin";
    std::string state_sha256;
};

/// Writes dir/state.bin, then dir/checkpoint.json carrying its digest.
void write_checkpoint(const std::string& dir, CheckpointManifest manifest, const std::string& state);
/// Reads both files and verifies the digest; CorruptCheckpoint on any mismatch.
CheckpointManifest read_checkpoint(const std::string& dir, std::string& state);

inline void encode_state(ByteWriter& w, std::size_t s) { w.u64(s); }
inline void encode_state(ByteWriter& w, const std::vector<double>& s) { w.f64s(s); }
inline void decode_state(ByteReader& r, std::size_t& s) { s = r.u64(); }
inline void decode_state(ByteReader& r, std::vector<double>& s) { s = r.f64s(); }

void encode_timeline(ByteWriter& w, const FvTimeline& tl);
FvTimeline decode_timeline(ByteReader& r);

template <class Snapshot>
std::string encode_fv_snapshot(const Snapshot& s) {
    ByteWriter w;
    w.str("QPFVSNAP");
    w.u64(s.step);
    w.u64(s.particles.size());
    for (const auto& p : s.particles) encode_state(w, p);
    for (const auto& h : s.history) w.f64s(h);
    for (const auto& h : s.slots) w.u32s(h);
    for (const auto& h : s.last_phase) w.f64s(h);
    encode_timeline(w, s.timeline);
    return w.bytes();
}

template <class Snapshot>
Snapshot decode_fv_snapshot(std::string_view bytes) {
    ByteReader r(bytes);
    if (r.str() != "QPFVSNAP") fail(ErrorKind::corrupt_checkpoint, "checkpoint: bad payload magic");
    Snapshot s;
    s.step = r.u64();
    std::uint64_t n = r.count(8);
    s.particles.resize(n);
    for (auto& p : s.particles) decode_state(r, p);
    s.history.resize(n);
    for (auto& h : s.history) h = r.f64s();
    s.slots.resize(n);
    for (auto& h : s.slots) h = r.u32s();
    s.last_phase.resize(n);
    for (auto& h : s.last_phase) h = r.f64s();
    s.timeline = decode_timeline(r);
    if (!r.done()) fail(ErrorKind::corrupt_checkpoint, "checkpoint: trailing bytes");
    return s;
}

}  // namespace qpattern
