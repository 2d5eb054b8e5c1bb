#pragma once

#include <array>
#include <cstdint>
#include <limits>

namespace heston {

// Philox4x32-10 counter-based generator (Salmon et al., SC'11).
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

inline constexpr std::uint32_t kPhiloxM0 = 0xD2511F53u;
inline constexpr std::uint32_t kPhiloxM1 = 0xCD9E8D57u;
inline constexpr std::uint32_t kPhiloxW0 = 0x9E3779B9u;
inline constexpr std::uint32_t kPhiloxW1 = 0xBB67AE85u;

constexpr PhiloxCounter philox4x32_10(PhiloxCounter c, PhiloxKey k) {
    for (int round = 0; round < 10; ++round) {
        if (round > 0) {
            k[0] += kPhiloxW0;
            k[1] += kPhiloxW1;
        }
        const std::uint64_t p0 = std::uint64_t{kPhiloxM0} * c[0];
        const std::uint64_t p1 = std::uint64_t{kPhiloxM1} * c[2];
        const auto hi0 = static_cast<std::uint32_t>(p0 >> 32);
        const auto lo0 = static_cast<std::uint32_t>(p0);
        const auto hi1 = static_cast<std::uint32_t>(p1 >> 32);
        const auto lo1 = static_cast<std::uint32_t>(p1);
        c = {hi1 ^ c[1] ^ k[0], lo1, hi0 ^ c[3] ^ k[1], lo0};
    }
    return c;
}

constexpr PhiloxKey philox_key(std::uint64_t seed) {
    return {static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32)};
}

// Stream layout. Word 1 of the counter selects the stream family:
//   0        -> Brownian increments of step `step` on path `path`
//   1 + sub  -> auxiliary draws (exact CIR sampler) of that step
//   2^30     -> bridge crossing draws of the diagnostics
constexpr PhiloxCounter brownian_counter(std::uint64_t path, std::uint64_t step) {
    return {static_cast<std::uint32_t>(step), 0u, static_cast<std::uint32_t>(path),
            static_cast<std::uint32_t>(path >> 32)};
}

// UniformRandomBitGenerator over the auxiliary stream of one (path, step).
class PhiloxEngine {
public:
    using result_type = std::uint32_t;

    PhiloxEngine(std::uint64_t seed, std::uint64_t path, std::uint64_t step)
        : key_(philox_key(seed)), path_(path), step_(step) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        if (used_ == 4) refill();
        return block_[used_++];
    }

    // Uniform on (0, 1], 53-bit resolution.
    double uniform_open0();

private:
    void refill() {
        const PhiloxCounter c{static_cast<std::uint32_t>(step_), 1u + sub_++, static_cast<std::uint32_t>(path_),
                              static_cast<std::uint32_t>(path_ >> 32)};
        block_ = philox4x32_10(c, key_);
        used_ = 0;
    }

    PhiloxKey key_;
    std::uint64_t path_;
    std::uint64_t step_;
    std::uint32_t sub_ = 0;
    PhiloxCounter block_{};
    int used_ = 4;
};

inline double PhiloxEngine::uniform_open0() {
    const std::uint64_t hi = (*this)();
    const std::uint64_t lo = (*this)();
    const std::uint64_t bits = ((hi << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
}

} // namespace heston
