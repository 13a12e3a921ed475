#pragma once

#include <cstdint>
#include <string_view>

namespace netdep {

// splitmix64: tiny, portable, deterministic across platforms. We avoid
// <random> distributions on purpose: their output is implementation-defined
// and would break byte-identical reruns between toolchains.
inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ULL);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

inline uint64_t fnv1a64(std::string_view s) {
    uint64_t h = 1469598103934665603ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

class DetRng {
  public:
    explicit DetRng(uint64_t seed) : state_(seed) {}

    uint64_t next() { return splitmix64(state_); }

    // Uniform in [0, bound). Lemire-style reduction without rejection; the
    // bias is ~bound/2^64 which is irrelevant for workload jitter.
    uint64_t below(uint64_t bound) {
        if (bound == 0) return 0;
        return static_cast<uint64_t>(
            (static_cast<__uint128_t>(next()) * bound) >> 64);
    }

    uint64_t range(uint64_t lo, uint64_t hi_inclusive) {
        return lo + below(hi_inclusive - lo + 1);
    }

    bool chance(double p) {
        return static_cast<double>(next() >> 11) * 0x1.0p-53 < p;
    }

  private:
    uint64_t state_;
};

// Derives an independent stream for a named sub-component of a run.
inline DetRng sub_rng(uint64_t seed, std::string_view label) {
    uint64_t s = seed ^ fnv1a64(label);
    // one warmup step so labels differing in few bits decorrelate
    splitmix64(s);
    return DetRng(s);
}

}  // namespace netdep
