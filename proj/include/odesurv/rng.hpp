#pragma once

// Counter-splittable RNG: each (master seed, replicate, subject) triple
// seeds an independent splitmix64 stream, so any subject of any replicate
// can be regenerated in isolation and in parallel.  Platform-independent
// by construction (pure 64-bit integer arithmetic).

#include <cmath>
#include <cstdint>

namespace odesurv {

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ull;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBull;
    return z ^ (z >> 31);
}

class StreamRng {
public:
    StreamRng(std::uint64_t master, std::uint64_t replicate, std::uint64_t subject) {
        state_ = mix64(master ^ 0x9E3779B97F4A7C15ull);
        state_ = mix64(state_ ^ (replicate + 0xC2B2AE3D27D4EB4Full));
        state_ = mix64(state_ ^ (subject + 0x165667B19E3779F9ull));
        if (state_ == 0) state_ = 0x9E3779B97F4A7C15ull;
    }

    std::uint64_t bits() {
        state_ += 0x9E3779B97F4A7C15ull;
        return mix64(state_);
    }

    // Open interval (0, 1); safe for -log(u) and Box-Muller.
    double uniform() {
        return (static_cast<double>(bits() >> 11) + 0.5) * 0x1p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform(), u2 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double c = std::cos(6.283185307179586477 * u2);
        double s = std::sin(6.283185307179586477 * u2);
        spare_ = r * s;
        have_spare_ = true;
        return r * c;
    }

    int bernoulli(double p) { return uniform() < p ? 1 : 0; }

private:
    std::uint64_t state_ = 0;
    bool have_spare_ = false;
    double spare_ = 0;
};

}  // namespace odesurv
