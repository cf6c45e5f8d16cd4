#pragma once

#include <cmath>
#include <cstdint>
#include <random>

#include "qqc/constants.hpp"

namespace qqc {

// Deterministic, platform-independent randomness. Ensemble members derive
// their stream from (master seed, scan point, member index) so any run can be
// reproduced in isolation. std::mt19937_64 output is pinned by the standard;
// the distributions below avoid std::uniform_real_distribution and friends,
// whose sequences are implementation-defined.

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ull;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ull;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebull;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t point, std::uint64_t member) {
    std::uint64_t s = splitmix64(master ^ 0x6a09e667f3bcc908ull);
    s = splitmix64(s ^ point);
    s = splitmix64(s ^ (member + 0x510e527fade682d1ull));
    return s;
}

class Rng {
  public:
    explicit Rng(std::uint64_t seed) : eng_(seed) {}

    std::uint64_t raw() { return eng_(); }

    // uniform in [0, 1)
    double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    double angle() { return constants::two_pi * uniform(); }

    // standard normal via Box-Muller; deterministic call sequence
    double normal() {
        if (have_cached_) {
            have_cached_ = false;
            return cached_;
        }
        double u1 = uniform();
        double u2 = uniform();
        while (u1 <= 0.0) u1 = uniform();
        double r = std::sqrt(-2.0 * std::log(u1));
        double t = constants::two_pi * u2;
        cached_ = r * std::sin(t);
        have_cached_ = true;
        return r * std::cos(t);
    }

  private:
    std::mt19937_64 eng_;
    double cached_ = 0.0;
    bool have_cached_ = false;
};

}  // namespace qqc
