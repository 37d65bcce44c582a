#pragma once

#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <vector>

namespace loft {

// Deterministic splitmix64 stream with counter-based derivation.
//
// A stream is identified by (master seed, path of words). Derived streams for
// distinct paths are statistically independent, and adding new consumers
// (more workers, more seeds) never perturbs existing streams. Gaussians come
// from an explicit Box-Muller transform so that sequences are identical
// across standard libraries and platforms.
class Rng {
public:
    explicit Rng(std::uint64_t seed) : state_(mix(seed + kGamma)) {}

    static Rng derive(std::uint64_t master, std::initializer_list<std::uint64_t> path) {
        std::uint64_t s = mix(master + kGamma);
        for (std::uint64_t w : path) {
            s = mix(s ^ mix(w + kGamma));
        }
        return Rng(s);
    }

    std::uint64_t next_u64() {
        state_ += kGamma;
        return mix(state_);
    }

    // Uniform in [0, 1), 53-bit resolution.
    double uniform() {
        return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
    }

    double uniform(double lo, double hi) {
        return lo + (hi - lo) * uniform();
    }

    // Standard normal via Box-Muller; generates pairs and caches the second.
    double normal() {
        if (has_cached_) {
            has_cached_ = false;
            return cached_;
        }
        const double u1 = 1.0 - uniform(); // (0, 1], keeps log finite
        const double u2 = uniform();
        const double r = std::sqrt(-2.0 * std::log(u1));
        const double a = 6.283185307179586476925286766559 * u2;
        cached_ = r * std::sin(a);
        has_cached_ = true;
        return r * std::cos(a);
    }

    // Uniform integer in [0, n), n > 0. Lemire multiply-shift; the bias is
    // below 2^-64 per draw which is irrelevant at simulation scale.
    std::uint64_t below(std::uint64_t n) {
        return static_cast<std::uint64_t>(
            (static_cast<__uint128_t>(next_u64()) * static_cast<__uint128_t>(n)) >> 64);
    }

    int sign() { return (next_u64() & 1u) != 0 ? 1 : -1; }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const std::size_t j = static_cast<std::size_t>(below(i));
            std::swap(v[i - 1], v[j]);
        }
    }

private:
    static constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ull;

    static std::uint64_t mix(std::uint64_t z) {
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
        return z ^ (z >> 31);
    }

    std::uint64_t state_;
    double cached_ = 0.0;
    bool has_cached_ = false;
};

// Stream tags used when deriving sub-streams from a master seed. Kept in one
// place so the derivation scheme is auditable.
namespace stream {
constexpr std::uint64_t kDataset = 1;
constexpr std::uint64_t kInit = 2;
constexpr std::uint64_t kMasks = 3;
constexpr std::uint64_t kPartition = 4;
constexpr std::uint64_t kWorker = 5;
constexpr std::uint64_t kCell = 6;
constexpr std::uint64_t kLabels = 7;
constexpr std::uint64_t kFinetune = 8;
} // namespace stream

} // namespace loft
