#pragma once
// Deterministic random number plumbing.
//
// Stream seeding is three chained splitmix64 finalizer steps folding in
// (master_seed, experiment, replication) in that order, so replication
// streams are reproducible under any parallel schedule. Per-stream generation
// is xoshiro256++. Uniforms are (x >> 11) * 2^-53 + 2^-54, which lies in the
// open interval (0,1) so downstream inversions never see 0 or 1.
//
// Normal variates use Acklam inversion (special.hpp); exponential variates
// use -log(u) with the branchless range-reduced log below. Both transforms
// consume exactly one uniform per variate. That discipline is load-bearing:
// common-random-number coupling and the lane-parallel counting engine both
// assume stream position k always maps to the same data value.

#include <bit>
#include <cmath>
#include <cstdint>

#include "special.hpp"

namespace qmiss::rng {

inline uint64_t mix64(uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

inline uint64_t stream_seed(uint64_t master, uint64_t experiment, uint64_t rep) {
    return mix64(mix64(mix64(master) ^ experiment) ^ rep);
}

struct Xoshiro256pp {
    uint64_t s[4];

    explicit Xoshiro256pp(uint64_t seed = 1) {
        uint64_t t = seed;
        for (auto& w : s) {
            t += 0x9E3779B97F4A7C15ULL;
            uint64_t z = t;
            z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
            z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
            w = z ^ (z >> 31);
        }
    }

    static constexpr uint64_t rotl(uint64_t x, int k) {
        return (x << k) | (x >> (64 - k));
    }

    uint64_t next() {
        uint64_t r = rotl(s[0] + s[3], 23) + s[0];
        uint64_t t = s[1] << 17;
        s[2] ^= s[0];
        s[3] ^= s[1];
        s[1] ^= s[2];
        s[0] ^= s[3];
        s[2] ^= t;
        s[3] = rotl(s[3], 45);
        return r;
    }

    double u01() { return double(next() >> 11) * 0x1.0p-53 + 0x1.0p-54; }
};

// -log(u) for normal positive doubles. Bit-level range reduction centered on
// sqrt(2)/2 (so |log m| <= log sqrt(2) and the e*log2 recombination never
// cancels catastrophically), then 2*atanh(t) with t = (m-1)/(m+1) through
// t^13. Relative error vs std::log is ~1.3e-12; unlike std::log the loop
// body has no branches, so lane loops over it vectorize.
inline double neg_log(double u) {
    uint64_t bits = std::bit_cast<uint64_t>(u);
    int64_t e = int64_t(bits - 0x3fe6a09e667f3bcdULL) >> 52;
    double m = std::bit_cast<double>(bits - uint64_t(e) * 0x0010000000000000ULL);
    double t = (m - 1.0) / (m + 1.0);
    double t2 = t * t;
    double p = t * (2.0 + t2 * (2.0 / 3 + t2 * (2.0 / 5 + t2 * (2.0 / 7 +
               t2 * (2.0 / 9 + t2 * (2.0 / 11 + t2 * (2.0 / 13)))))));
    return -(p + double(e) * 0x1.62e42fefa39efp-1);
}

// Branch-free Acklam inversion: central and tail rationals are both evaluated
// and the result selected, so lane loops over it vectorize. Tail logs go
// through neg_log; agreement with special::norm_quantile_fast is ~1e-9
// relative (they differ only through the log inside the tails).
inline double normal_from_u(double u) {
    bool lower = u < special::kAcklamPlow;
    bool upper = u > 1.0 - special::kAcklamPlow;
    double ut = lower ? u : (upper ? 1.0 - u : 0.5);
    double xt = special::acklam_tail(std::sqrt(2.0 * neg_log(ut)));
    double xc = special::acklam_central((lower || upper) ? 0.5 : u);
    return lower ? xt : (upper ? -xt : xc);
}

inline double exponential_from_u(double u, double mean) { return mean * neg_log(u); }

}  // namespace qmiss::rng
