#pragma once

#include <array>
#include <cstdint>

namespace byzfl {

/// Philox4x32-10 block function: maps (counter, key) to four 32-bit words.
using PhiloxCounter = std::array<std::uint32_t, 4>;
using PhiloxKey = std::array<std::uint32_t, 2>;

PhiloxCounter philox4x32_10(PhiloxCounter counter, PhiloxKey key);

/// What a random draw is used for. Part of every stream key so that draws
/// for different purposes never share a stream.
enum class Purpose : std::uint32_t {
    ProblemData = 1,
    LocalGradient = 2,
    Attack = 3,
    InitialPoint = 4,
    Schedule = 5,
    Verification = 6,
};

/// Identity of one random stream: (purpose, round t, client m, step k).
struct StreamKey {
    Purpose purpose;
    std::uint32_t round = 0;
    std::uint32_t client = 0;
    std::uint32_t step = 0;
};

/*
 * A counter-based stream. Every value it produces is a pure function of
 * (master seed, stream key, position in the stream), so draws never depend
 * on which thread or in which order clients are evaluated.
 *
 * Normal variates use Box-Muller on our own uniforms rather than
 * std::normal_distribution, whose output is implementation-defined.
 */
class RngStream {
public:
    RngStream(std::uint64_t master_seed, StreamKey key);

    std::uint32_t next_u32();
    std::uint64_t next_u64();

    /// Uniform on [0, 1) with 53 random bits.
    double uniform();

    /// Uniform integer in [0, n). Requires n > 0.
    std::uint64_t uniform_index(std::uint64_t n);

    /// Standard normal variate.
    double normal();

private:
    void refill();

    PhiloxKey key_;
    PhiloxCounter counter_;
    PhiloxCounter block_{};
    int used_ = 4;
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

/// Holds the master seed and hands out keyed streams.
class KeyedRng {
public:
    explicit KeyedRng(std::uint64_t master_seed) : seed_(master_seed) {}

    std::uint64_t seed() const { return seed_; }

    RngStream stream(Purpose purpose, std::uint32_t round = 0, std::uint32_t client = 0, std::uint32_t step = 0) const {
        return RngStream(seed_, StreamKey{purpose, round, client, step});
    }

private:
    std::uint64_t seed_;
};

} // namespace byzfl
