#pragma once

#include <cstdint>
#include <random>

namespace cfica {

// All randomness in the library flows from one root seed. Independent streams
// (replications, bootstrap draws, subsample tuples) are derived by hashing the
// root seed together with stream labels, so parallel tasks never share state
// and results do not depend on scheduling.

namespace detail {

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

/// Derive a child seed from a root seed and up to three counters.
inline std::uint64_t derive_seed(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0,
                                 std::uint64_t c = 0) {
    std::uint64_t h = detail::splitmix64(root ^ 0x243f6a8885a308d3ULL);
    h = detail::splitmix64(h ^ a);
    h = detail::splitmix64(h ^ b);
    h = detail::splitmix64(h ^ c);
    return h;
}

/// Engine for a derived stream.
inline std::mt19937_64 make_engine(std::uint64_t root, std::uint64_t a, std::uint64_t b = 0,
                                   std::uint64_t c = 0) {
    return std::mt19937_64(derive_seed(root, a, b, c));
}

// Fixed stream labels, so independent uses of the root seed cannot collide.
namespace stream {
constexpr std::uint64_t kPanel = 0x01;
constexpr std::uint64_t kTuples = 0x02;
constexpr std::uint64_t kQTuples = 0x03;
constexpr std::uint64_t kStarts = 0x04;
constexpr std::uint64_t kBootstrap = 0x05;
constexpr std::uint64_t kReplication = 0x06;
constexpr std::uint64_t kVarTuples = 0x07;
}  // namespace stream

}  // namespace cfica
