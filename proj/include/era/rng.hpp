#pragma once

#include <cstdint>
#include <string_view>

#include "era/vec3.hpp"

namespace era {

// splitmix64: tiny counter-based generator with portable, bit-stable output.
// All randomness in the project flows through this type so that runs are
// reproducible across compilers and standard libraries (std distributions
// are implementation-defined and would break byte determinism).
class Rng {
  public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        std::uint64_t z = (state_ += 0x9E3779B97F4A7C15ULL);
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        return z ^ (z >> 31);
    }

    // Uniform double in [0, 1).
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [0, n), n > 0. Lemire multiply-shift; bias is
    // negligible at the ranges used here and the mapping is portable.
    std::uint64_t uniform_int(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next_u64()) * n) >> 64);
    }

    // Standard normal via Box-Muller (one value per call).
    double normal() {
        const double u1 = 1.0 - uniform();  // (0, 1]
        const double u2 = uniform();
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586476925286766559 * u2);
    }

    Vec3 normal_vec3() {
        const double a = normal();
        const double b = normal();
        const double c = normal();
        return {a, b, c};
    }

    Vec3 uniform_unit_vec3() { return normal_vec3().normalized(); }

    std::uint64_t state() const { return state_; }

  private:
    std::uint64_t state_;
};

namespace detail {
inline std::uint64_t fnv1a64(std::string_view s) {
    std::uint64_t h = 0xCBF29CE484222325ULL;
    for (const char c : s) {
        h ^= static_cast<std::uint64_t>(static_cast<unsigned char>(c));
        h *= 0x100000001B3ULL;
    }
    return h;
}

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
    z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
    return z ^ (z >> 31);
}
}  // namespace detail

// Derives an independent named sub-stream seed from a base seed. Every random
// consumer (world spawning, k-means, training, evaluation) gets its own
// stream so that changing one stage never perturbs another.
inline std::uint64_t substream_seed(std::uint64_t base, std::string_view name,
                                    std::uint64_t index = 0) {
    std::uint64_t h = detail::mix64(base ^ detail::fnv1a64(name));
    return detail::mix64(h + 0x9E3779B97F4A7C15ULL * (index + 1));
}

inline Rng substream(std::uint64_t base, std::string_view name, std::uint64_t index = 0) {
    return Rng(substream_seed(base, name, index));
}

}  // namespace era
