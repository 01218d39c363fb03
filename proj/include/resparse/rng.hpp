#pragma once

#include <cstdint>
#include <limits>

namespace resparse {

/// SplitMix64 generator (Steele, Lea & Flood 2014). One 64-bit word of
/// state, satisfies UniformRandomBitGenerator, serializes to a single
/// integer. Used as the engine behind every random stream in the library
/// so that runs are exactly replayable from their seeds.
class SplitMix64 {
public:
    using result_type = std::uint64_t;

    explicit SplitMix64(std::uint64_t seed = 0) : state_(seed) {}

    static constexpr result_type min() { return 0; }
    static constexpr result_type max() { return std::numeric_limits<result_type>::max(); }

    result_type operator()() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ull);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
        return z ^ (z >> 31);
    }

    std::uint64_t state() const { return state_; }
    void set_state(std::uint64_t s) { state_ = s; }

private:
    std::uint64_t state_;
};

namespace rng {

/// SplitMix64 finalizer: a bijective 64-bit mixer.
inline std::uint64_t mix(std::uint64_t z) {
    z += 0x9E3779B97F4A7C15ull;
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

/// Counter-based seed derivation: child = mix(mix(parent ^ f(tag)) ^ g(index)).
/// Distinct (parent, tag, index) triples map to distinct streams for all
/// practical purposes; the scheme is pure, so any stream can be re-derived
/// from the master seed alone.
inline std::uint64_t derive(std::uint64_t parent, std::uint64_t tag, std::uint64_t index = 0) {
    std::uint64_t h = mix(parent ^ (0x9E3779B97F4A7C15ull * (tag + 1)));
    h = mix(h ^ (0xC2B2AE3D27D4EB4Full * (index + 1)));
    return h;
}

/// Stream tags used across the library. Values are part of the
/// reproducibility contract: changing them changes every derived run.
enum Tag : std::uint64_t {
    kReplica = 1,
    kArm = 2,
    kReservoirInput = 3,
    kReservoirRecurrent = 4,
    kPowerIteration = 5,
    kTaskBuild = 6,
    kStimulusSynth = 7,
    kEpisodeItem = 8,
    kEpisodeNoise = 9,
    kNoiseStep = 10,
    kDecision = 11,
    kMetropolis = 12,
    kPrelearn = 13,
    kEval = 14,
    kActionPlus = 15,
    kReservoirSeed = 16,
    kStimulusSeed = 17,
    kTaskSeed = 18,
    kEpisodeStream = 19,
    kEvalDecision = 20,
    kCalibration = 21,
};

}  // namespace rng
}  // namespace resparse
