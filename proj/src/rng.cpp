#include "rng.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace sargen {

namespace {

/// SplitMix64 finalizer. Good avalanche, trivially portable.
std::uint64_t mix(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

}  // namespace

Rng::Rng(std::uint64_t seed, RngStream stream, std::uint64_t index) {
    // Nested mixing keeps (seed, stream, index) triples statistically
    // independent even for adjacent values.
    key_ = mix(mix(mix(seed) ^ static_cast<std::uint64_t>(stream)) ^ index);
}

std::uint64_t Rng::next_u64() {
    return mix(key_ ^ mix(++counter_));
}

double Rng::uniform() {
    return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double Rng::gaussian() {
    if (has_spare_) {
        has_spare_ = false;
        return spare_;
    }
    // u1 in (0,1] so log stays finite.
    const double u1 = static_cast<double>((next_u64() >> 11) + 1) * 0x1.0p-53;
    const double u2 = uniform();
    const double radius = std::sqrt(-2.0 * std::log(u1));
    const double angle = 2.0 * std::numbers::pi * u2;
    spare_ = radius * std::sin(angle);
    has_spare_ = true;
    return radius * std::cos(angle);
}

void Rng::fill_gaussian(std::span<double> out, double sigma) {
    for (double& v : out) v = sigma * gaussian();
}

void Rng::fill_uniform(std::span<double> out) {
    for (double& v : out) v = uniform();
}

std::uint64_t Rng::uniform_int(std::uint64_t n) {
    if (n == 0) throw std::invalid_argument("uniform_int: n must be positive");
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = next_u64();
    while (x >= limit) x = next_u64();
    return x % n;
}

}  // namespace sargen
