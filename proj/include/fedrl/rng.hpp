#pragma once

#include <cstdint>
#include <random>

namespace fedrl {

// SplitMix64 finalizer. Used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

// Seed splitting rule: each component is folded in through one SplitMix64
// round, so derive_seed(s, a, b) differs from derive_seed(s, b, a).
constexpr std::uint64_t derive_seed(std::uint64_t master) { return splitmix64(master); }

template <typename... Rest>
constexpr std::uint64_t derive_seed(std::uint64_t master, std::uint64_t next, Rest... rest) {
    return derive_seed(splitmix64(master) ^ next, static_cast<std::uint64_t>(rest)...);
}

// Stream tags. Keep them distinct so the MDP and episode streams never alias.
inline constexpr std::uint64_t kMdpStreamTag = 0x6d6470ULL;          // "mdp"
inline constexpr std::uint64_t kAgentStreamTag = 0x6167656e74ULL;    // "agent"
inline constexpr std::uint64_t kReplicationTag = 0x7265706cULL;      // "repl"

// Portable generator: mt19937_64 is fully specified by the standard, and all
// distributions below are written out by hand, so outputs are bit-identical
// across standard libraries.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next_u64() { return engine_(); }

    // Uniform on [0, 1) with 53 random bits.
    double uniform01() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    // Exponential(1) via inversion; 1 - u lies in (0, 1] so the log is finite.
    double exponential();

    // Uniform integer in [0, n), n >= 1, by rejection (no modulo bias).
    std::uint64_t uniform_index(std::uint64_t n);

private:
    std::mt19937_64 engine_;
};

// Episode stream of one agent in one round of one run. Rounds get their own
// stream so that a checkpoint (round index + seed) determines the continuation.
inline Rng agent_stream(std::uint64_t run_seed, int agent, std::int64_t round) {
    return Rng(derive_seed(run_seed, kAgentStreamTag, static_cast<std::uint64_t>(agent),
                           static_cast<std::uint64_t>(round)));
}

}  // namespace fedrl
