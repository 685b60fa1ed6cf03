#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <utility>
#include <vector>

#include "error.hpp"

namespace etch {

inline constexpr double kPi = 3.14159265358979323846;

// Deterministic random source. Every draw is explicit arithmetic on top of
// mt19937_64 output; std::*_distribution and std::shuffle are avoided because
// their sequences differ between standard library implementations.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : gen_(seed) {}

    std::uint64_t next() { return gen_(); }

    // Uniform integer in [0, n). Modulo bias is negligible for the small n
    // used here (n << 2^64).
    std::uint64_t below(std::uint64_t n) {
        if (n == 0) {
            throw ConfigError("Rng::below: empty range");
        }
        return gen_() % n;
    }

    int range(int lo, int hi) {  // inclusive bounds
        if (hi < lo) {
            throw ConfigError("Rng::range: empty range");
        }
        return lo + static_cast<int>(below(static_cast<std::uint64_t>(hi - lo) + 1));
    }

    // Uniform in [0, 1) with 53 bits of precision.
    double unit() { return static_cast<double>(gen_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * unit(); }

    // Standard normal via Box-Muller; caches the second value of each pair.
    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = 0.0;
        do {
            u1 = unit();
        } while (u1 <= 0.0);
        double u2 = unit();
        double r = std::sqrt(-2.0 * std::log(u1));
        spare_ = r * std::sin(2.0 * kPi * u2);
        have_spare_ = true;
        return r * std::cos(2.0 * kPi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {  // Fisher-Yates from the back
        for (std::size_t i = v.size(); i > 1; --i) {
            std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::mt19937_64 gen_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace etch
