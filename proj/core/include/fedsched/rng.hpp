#pragma once

#include <cmath>
#include <cstdint>
#include <vector>

namespace fedsched::rng {

// Counter-based randomness: every random decision is a pure hash of
// (seed, stream tag, counters). Decisions are therefore independent of
// evaluation order, which is what makes simulations bit-reproducible even
// if the surrounding loop structure changes.

inline constexpr std::uint64_t kGamma = 0x9e3779b97f4a7c15ULL;

constexpr std::uint64_t mix(std::uint64_t x) {
    x += kGamma;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

constexpr std::uint64_t derive(std::uint64_t key, std::uint64_t word) {
    return mix(key ^ (mix(word) + kGamma));
}

constexpr std::uint64_t derive(std::uint64_t key, std::uint64_t a, std::uint64_t b) {
    return derive(derive(key, a), b);
}

constexpr std::uint64_t derive(std::uint64_t key, std::uint64_t a, std::uint64_t b,
                               std::uint64_t c) {
    return derive(derive(key, a, b), c);
}

// Compile-time FNV-1a of a short literal, used to name independent streams.
constexpr std::uint64_t stream_tag(const char* s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (; *s != '\0'; ++s) h = (h ^ static_cast<unsigned char>(*s)) * 0x100000001b3ULL;
    return h;
}

// Uniform in [0, 1) with 53 random bits.
constexpr double to_unit(std::uint64_t h) { return static_cast<double>(h >> 11) * 0x1.0p-53; }

// Sequential generator for places that need many draws from one decision
// point (shuffles, gamma rejection loops). Seed it with derive(...) so the
// stream is still keyed by its counters.
class SplitMix64 {
  public:
    explicit SplitMix64(std::uint64_t seed) : state_(seed) {}

    std::uint64_t next() {
        state_ += kGamma;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

    double uniform01() { return to_unit(next()); }

    // Uniform integer in [0, bound); multiply-shift, bias < bound / 2^64.
    std::uint64_t below(std::uint64_t bound) {
        return static_cast<std::uint64_t>(
            (static_cast<unsigned __int128>(next()) * bound) >> 64);
    }

    double normal() {
        if (have_spare_) {
            have_spare_ = false;
            return spare_;
        }
        double u1 = uniform01();
        while (u1 <= 0.0) u1 = uniform01();
        const double u2 = uniform01();
        const double radius = std::sqrt(-2.0 * std::log(u1));
        const double angle = 2.0 * 3.14159265358979323846 * u2;
        spare_ = radius * std::sin(angle);
        have_spare_ = true;
        return radius * std::cos(angle);
    }

    // Marsaglia-Tsang; alpha < 1 is boosted through Gamma(alpha + 1).
    double gamma(double alpha) {
        if (alpha < 1.0) {
            double u = uniform01();
            while (u <= 0.0) u = uniform01();
            return gamma(alpha + 1.0) * std::pow(u, 1.0 / alpha);
        }
        const double d = alpha - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x = normal();
            double v = 1.0 + c * x;
            if (v <= 0.0) continue;
            v = v * v * v;
            const double u = uniform01();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    std::vector<double> dirichlet(double alpha, int dim) {
        std::vector<double> w(static_cast<std::size_t>(dim));
        double total = 0.0;
        for (auto& v : w) {
            v = gamma(alpha);
            total += v;
        }
        if (total <= 0.0) {
            const double uniform = 1.0 / static_cast<double>(dim);
            for (auto& v : w) v = uniform;
            return w;
        }
        for (auto& v : w) v /= total;
        return w;
    }

    template <typename T>
    void shuffle(std::vector<T>& items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[below(i)]);
        }
    }

  private:
    std::uint64_t state_;
    double spare_ = 0.0;
    bool have_spare_ = false;
};

}  // namespace fedsched::rng
