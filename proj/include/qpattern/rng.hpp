#pragma once

#include <array>
#include <cstdint>

namespace qpattern {

/// Philox4x32-10 block function (Salmon et al., SC'11).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32(PhiloxCounter counter, PhiloxKey key) noexcept;

/// Separate counter lanes for the draws made at one (stream, step) pair.
enum class StreamPurpose : std::uint32_t {
    dynamics = 0,
    resample = 1,
    initial = 2,
    auxiliary = 3,
};

/// Counter-based stream keyed by (run seed, stream id, step index).
///
/// Every draw is a pure function of the key and an internal block counter, so
/// results never depend on which thread advanced which particle.
class CounterStream {
public:
    CounterStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t step,
                  StreamPurpose purpose = StreamPurpose::dynamics) noexcept;

    /// Uniform on the open interval (0, 1) with 53 random bits.
    double uniform() noexcept;
    /// Standard normal via Box-Muller (no rejection, so counter use is fixed).
    double normal() noexcept;
    /// Uniform integer in [0, n); n > 0.
    std::uint64_t below(std::uint64_t n) noexcept;

    std::uint64_t blocks_used() const noexcept { return block_; }

private:
    void refill() noexcept;

    PhiloxKey key_;
    PhiloxCounter base_;
    std::uint64_t block_ = 0;
    std::array<std::uint32_t, 4> buffer_{};
    int next_word_ = 4;
    double spare_normal_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace qpattern
