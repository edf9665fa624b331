#include "qpattern/rng.hpp"

#include <cmath>
#include <numbers>

namespace qpattern {

namespace {

constexpr std::uint32_t kMul0 = 0xD2511F53u;
constexpr std::uint32_t kMul1 = 0xCD9E8D57u;
constexpr std::uint32_t kWeyl0 = 0x9E3779B9u;
constexpr std::uint32_t kWeyl1 = 0xBB67AE85u;

inline void mulhilo(std::uint32_t a, std::uint32_t b, std::uint32_t& hi, std::uint32_t& lo) {
    std::uint64_t product = static_cast<std::uint64_t>(a) * b;
    hi = static_cast<std::uint32_t>(product >> 32);
    lo = static_cast<std::uint32_t>(product);
}

}  // namespace

PhiloxCounter philox4x32(PhiloxCounter ctr, PhiloxKey key) noexcept {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            key[0] += kWeyl0;
            key[1] += kWeyl1;
        }
        std::uint32_t hi0, lo0, hi1, lo1;
        mulhilo(kMul0, ctr[0], hi0, lo0);
        mulhilo(kMul1, ctr[2], hi1, lo1);
        ctr = {hi1 ^ ctr[1] ^ key[0], lo1, hi0 ^ ctr[3] ^ key[1], lo0};
    }
    return ctr;
}

CounterStream::CounterStream(std::uint64_t seed, std::uint64_t stream_id, std::uint64_t step,
                             StreamPurpose purpose) noexcept
    : key_{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)},
      base_{0u, static_cast<std::uint32_t>(step),
            static_cast<std::uint32_t>((step >> 32) & 0xFFFFu) |
                (static_cast<std::uint32_t>(purpose) << 16),
            static_cast<std::uint32_t>(stream_id ^ (stream_id >> 32))} {}

void CounterStream::refill() noexcept {
    PhiloxCounter ctr = base_;
    ctr[0] = static_cast<std::uint32_t>(block_);
    // Blocks beyond 2^32 per (stream, step) fold into the high step lane.
    ctr[2] ^= static_cast<std::uint32_t>(block_ >> 32) << 24;
    buffer_ = philox4x32(ctr, key_);
    ++block_;
    next_word_ = 0;
}

double CounterStream::uniform() noexcept {
    if (next_word_ > 2) {
        refill();
    }
    std::uint64_t hi = buffer_[next_word_];
    std::uint64_t lo = buffer_[next_word_ + 1];
    next_word_ += 2;
    std::uint64_t bits = ((hi << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double CounterStream::normal() noexcept {
    if (has_spare_) {
        has_spare_ = false;
        return spare_normal_;
    }
    double u1 = uniform();
    double u2 = uniform();
    double radius = std::sqrt(-2.0 * std::log(u1));
    double angle = 2.0 * std::numbers::pi * u2;
    spare_normal_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

std::uint64_t CounterStream::below(std::uint64_t n) noexcept {
    auto k = static_cast<std::uint64_t>(uniform() * static_cast<double>(n));
    return k < n ? k : n - 1;
}

}  // namespace qpattern
