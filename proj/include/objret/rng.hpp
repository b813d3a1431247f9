#pragma once

#include <cmath>
#include <cstdint>
#include <string_view>

namespace objret {

namespace detail {

constexpr std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace detail

// Counter-based generator: output i of stream `key` is a pure function of
// (key, i), so streams can be split and replayed without shared state.
// All draws are identical across platforms; no std:: distributions are used.
class CounterRng {
public:
    explicit CounterRng(std::uint64_t key) : key_(detail::splitmix64(key)) {}

    std::uint64_t next_u64() {
        return detail::splitmix64(key_ ^ detail::splitmix64(counter_++));
    }

    // Uniform in [0, 1).
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    // Uniform integer in [lo, hi], inclusive.
    std::int64_t uniform_int(std::int64_t lo, std::int64_t hi) {
        const std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
        return lo + static_cast<std::int64_t>(next_u64() % span);
    }

    // Box-Muller; draws two uniforms per call, both strictly inside (0, 1).
    double normal() {
        const double u1 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
        const double u2 = (static_cast<double>(next_u64() >> 11) + 0.5) * 0x1.0p-53;
        return std::sqrt(-2.0 * std::log(u1)) * std::cos(6.283185307179586477 * u2);
    }

    std::uint64_t counter() const { return counter_; }

private:
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
};

// FNV-1a over the component name, mixed into the root seed. Every module
// derives its stream this way; there is no global RNG state anywhere.
inline std::uint64_t sub_seed(std::uint64_t seed, std::string_view component) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const char c : component) {
        h ^= static_cast<unsigned char>(c);
        h *= 0x100000001b3ULL;
    }
    return detail::splitmix64(seed ^ h);
}

inline std::uint64_t sub_seed(std::uint64_t seed, std::uint64_t index) {
    return detail::splitmix64(seed ^ detail::splitmix64(index + 0x51ed270b0f4d2c9fULL));
}

}  // namespace objret
