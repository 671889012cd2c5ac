#pragma once

#include <cmath>
#include <cstdint>
#include <limits>
#include <numbers>
#include <random>

#include <boost/math/special_functions/erf.hpp>

namespace tsde {

/// SplitMix64 finalizer; used to derive independent stream seeds.
constexpr std::uint64_t splitmix64(std::uint64_t x) noexcept {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Role of a random stream inside one Monte Carlo sample.
enum class stream_role : std::uint64_t { chain = 1, brownian = 2, bridge = 3, diagnostics = 4 };

/// Seed for (base seed, sample index, role). Depends only on its arguments, so
/// samples can be processed in any order.
constexpr std::uint64_t derive_seed(std::uint64_t base, std::uint64_t sample, stream_role role) noexcept {
    std::uint64_t s = splitmix64(base);
    s = splitmix64(s ^ sample);
    return splitmix64(s ^ (static_cast<std::uint64_t>(role) * 0xd1b54a32d192ed03ULL));
}

/// Platform-stable random stream.
///
/// Uniforms come from the 53 high bits of mt19937_64 (fully specified by the
/// standard). Normals use the inverse CDF, Phi^{-1}(u) = -sqrt(2) erfc^{-1}(2u),
/// evaluated with Boost.Math's rational approximations, so a given seed yields
/// the same numbers on every conforming platform. Exponentials use -ln(U)/rate.
class rng_stream {
public:
    explicit rng_stream(std::uint64_t seed) : engine_(seed) {}

    /// Uniform on (0, 1].
    double uniform_open_closed() { return static_cast<double>((engine_() >> 11) + 1) * 0x1.0p-53; }

    /// Uniform on (0, 1).
    double uniform_open() {
        return (static_cast<double>(engine_() >> 12) + 0.5) * 0x1.0p-52;
    }

    double normal() {
        double u = uniform_open();
        return -std::numbers::sqrt2 * boost::math::erfc_inv(2.0 * u);
    }

    /// Exponential with the given rate; infinite when rate is zero.
    double exponential(double rate) {
        if (rate <= 0.0) return std::numeric_limits<double>::infinity();
        return -std::log(uniform_open_closed()) / rate;
    }

private:
    std::mt19937_64 engine_;
};

} // namespace tsde
