#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string_view>

namespace alasso {

namespace detail {

constexpr std::uint64_t splitmix64_mix(std::uint64_t z) noexcept {
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
    return z ^ (z >> 31);
}

constexpr std::uint64_t rotl(std::uint64_t x, int k) noexcept {
    return (x << k) | (x >> (64 - k));
}

}  // namespace detail

/// xoshiro256** with splitmix64 seeding and keyed substreams.
///
/// A substream is addressed by (master seed, stream id); the pair is hashed
/// through two rounds of the splitmix64 finalizer and then expanded into the
/// 256-bit state. Distinct ids give statistically independent streams, and a
/// given id always reproduces the same stream, which is what lets replication
/// r be computed on any worker.
class Rng {
public:
    using result_type = std::uint64_t;

    static constexpr std::string_view kIdentity = "xoshiro256starstar+splitmix64-substreams";
    static constexpr int kVersion = 1;

    explicit Rng(std::uint64_t seed = 0x853c49e6748fea9bULL) noexcept { reseed(seed); }

    static Rng substream(std::uint64_t master, std::uint64_t stream) noexcept {
        const std::uint64_t key =
            detail::splitmix64_mix(detail::splitmix64_mix(master) ^
                                   detail::splitmix64_mix(stream + 0x9e3779b97f4a7c15ULL));
        return Rng(key);
    }

    void reseed(std::uint64_t seed) noexcept {
        std::uint64_t x = seed;
        for (auto& s : state_) {
            x += 0x9e3779b97f4a7c15ULL;
            s = detail::splitmix64_mix(x);
        }
        has_spare_ = false;
    }

    static constexpr result_type min() noexcept { return 0; }
    static constexpr result_type max() noexcept { return std::numeric_limits<result_type>::max(); }

    result_type operator()() noexcept {
        const std::uint64_t result = detail::rotl(state_[1] * 5, 7) * 9;
        const std::uint64_t t = state_[1] << 17;
        state_[2] ^= state_[0];
        state_[3] ^= state_[1];
        state_[1] ^= state_[2];
        state_[0] ^= state_[3];
        state_[2] ^= t;
        state_[3] = detail::rotl(state_[3], 45);
        return result;
    }

    /// Uniform on [0, 1) with 53 random bits.
    double uniform() noexcept { return static_cast<double>((*this)() >> 11) * 0x1.0p-53; }

    /// Standard normal via the Marsaglia polar method.
    double normal() noexcept {
        if (has_spare_) {
            has_spare_ = false;
            return spare_;
        }
        double u, v, s;
        do {
            u = 2.0 * uniform() - 1.0;
            v = 2.0 * uniform() - 1.0;
            s = u * u + v * v;
        } while (s >= 1.0 || s == 0.0);
        const double f = std::sqrt(-2.0 * std::log(s) / s);
        spare_ = v * f;
        has_spare_ = true;
        return u * f;
    }

    /// Gamma(shape, 1) by Marsaglia-Tsang; shape < 1 uses the u^(1/a) boost.
    double gamma(double shape) noexcept {
        if (shape < 1.0) {
            const double g = gamma(shape + 1.0);
            double u;
            do {
                u = uniform();
            } while (u == 0.0);
            return g * std::pow(u, 1.0 / shape);
        }
        const double d = shape - 1.0 / 3.0;
        const double c = 1.0 / std::sqrt(9.0 * d);
        for (;;) {
            double x, v;
            do {
                x = normal();
                v = 1.0 + c * x;
            } while (v <= 0.0);
            v = v * v * v;
            const double u = uniform();
            if (u < 1.0 - 0.0331 * x * x * x * x) return d * v;
            if (u > 0.0 && std::log(u) < 0.5 * x * x + d * (1.0 - v + std::log(v))) return d * v;
        }
    }

    double chi_squared(double dof) noexcept { return 2.0 * gamma(0.5 * dof); }

private:
    std::array<std::uint64_t, 4> state_{};
    double spare_ = 0.0;
    bool has_spare_ = false;
};

}  // namespace alasso
