#pragma once

#include <cmath>
#include <cstdint>

namespace nfc {

// Counter-free splitmix64. Used instead of <random> engines so that streams
// are cheap to fork per ray/pixel and results do not depend on the standard
// library's distribution implementations.
inline uint64_t splitmix64(uint64_t& state) {
    state += 0x9e3779b97f4a7c15ull;
    uint64_t z = state;
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

// Mixes a stream tag into a seed so derived streams are decorrelated.
inline uint64_t derive_stream(uint64_t seed, uint64_t stream) {
    uint64_t s = seed ^ (0x9e3779b97f4a7c15ull + (stream << 1));
    splitmix64(s);
    return s;
}

class Rng {
public:
    explicit Rng(uint64_t seed) : state_(seed) { splitmix64(state_); }
    Rng(uint64_t seed, uint64_t stream) : Rng(derive_stream(seed, stream)) {}

    uint64_t next() { return splitmix64(state_); }

    // Uniform in [0, 1).
    double uniform() { return double(next() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n). Multiply-shift; bias < n / 2^64.
    uint64_t uniform_int(uint64_t n) {
        return uint64_t((static_cast<unsigned __int128>(next()) * n) >> 64);
    }

    // Standard normal via Box-Muller, second draw cached.
    double gaussian() {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u1 = 1.0 - uniform();  // (0, 1]
        double u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double a = 2.0 * M_PI * u2;
        spare_ = r * std::sin(a);
        has_spare_ = true;
        return r * std::cos(a);
    }

private:
    uint64_t state_;
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace nfc
