#pragma once

#include <cmath>
#include <cstdint>
#include <numbers>
#include <string_view>
#include <vector>

namespace fairpipe {

// Deterministic splitmix64 stream. Used everywhere instead of <random> so
// that generated artifacts are identical across standard library
// implementations (std distributions are implementation-defined).
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next_u64() {
        state_ += 0x9e3779b97f4a7c15ull;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    // Uniform in [0, 1) with 53-bit resolution.
    double uniform() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Unbiased integer in [0, n). Lemire's multiply-shift with rejection.
    std::uint64_t below(std::uint64_t n) {
        using u128 = unsigned __int128;
        std::uint64_t x = next_u64();
        u128 m = static_cast<u128>(x) * n;
        auto lo = static_cast<std::uint64_t>(m);
        if (lo < n) {
            const std::uint64_t threshold = -n % n;
            while (lo < threshold) {
                x = next_u64();
                m = static_cast<u128>(x) * n;
                lo = static_cast<std::uint64_t>(m);
            }
        }
        return static_cast<std::uint64_t>(m >> 64);
    }

    // Standard normal via Box-Muller. Always consumes exactly two uniforms
    // (no cached spare) so stream positions stay predictable.
    double gaussian() {
        const double u1 = uniform();
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log1p(-u1));
        return r * std::cos(2.0 * std::numbers::pi * u2);
    }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    std::uint64_t state_;
};

namespace detail {

inline std::uint64_t fnv1a64(std::string_view s, std::uint64_t h = 0xcbf29ce484222325ull) {
    for (const char c : s) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ull;
    }
    return h;
}

inline std::uint64_t mix64(std::uint64_t z) {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

}  // namespace detail

// Derives an independent child seed from a base seed and a named purpose.
// Extra words distinguish instances of the same purpose (epoch, batch, ...).
inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag, std::uint64_t a = 0,
                                 std::uint64_t b = 0, std::uint64_t c = 0) {
    std::uint64_t h = detail::fnv1a64(tag);
    h = detail::mix64(h ^ detail::mix64(base + 0x9e3779b97f4a7c15ull));
    h = detail::mix64(h ^ detail::mix64(a + 0xd1b54a32d192ed03ull));
    h = detail::mix64(h ^ detail::mix64(b + 0x8cb92ba72f3d8dd7ull));
    h = detail::mix64(h ^ detail::mix64(c + 0xa24baed4963ee407ull));
    return h;
}

inline std::uint64_t hash_token(std::string_view token) { return detail::fnv1a64(token); }

}  // namespace fairpipe
