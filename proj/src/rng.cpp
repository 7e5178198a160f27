#include "jhpf/rng.hpp"

#include <cmath>
#include <stdexcept>

namespace jhpf {

namespace {
constexpr std::uint64_t kPcgMult = 6364136223846793005ULL;
constexpr double kTwoPi = 6.283185307179586476925286766559;
} // namespace

RngStream::RngStream(std::uint64_t seed, std::uint64_t stream) : seed_(seed), stream_(stream) {
    inc_ = (stream << 1u) | 1u;
    state_ = 0u;
    next_u32();
    state_ += seed;
    next_u32();
}

std::uint32_t RngStream::next_u32() {
    std::uint64_t old = state_;
    state_ = old * kPcgMult + inc_;
    std::uint32_t xorshifted = static_cast<std::uint32_t>(((old >> 18u) ^ old) >> 27u);
    std::uint32_t rot = static_cast<std::uint32_t>(old >> 59u);
    return (xorshifted >> rot) | (xorshifted << ((32u - rot) & 31u));
}

double RngStream::next_double() {
    std::uint64_t hi = next_u32();
    std::uint64_t lo = next_u32();
    std::uint64_t bits = ((hi << 32) | lo) >> 11; // 53 bits
    return static_cast<double>(bits) * 0x1.0p-53;
}

double RngStream::next_open() {
    std::uint64_t hi = next_u32();
    std::uint64_t lo = next_u32();
    std::uint64_t bits = ((hi << 32) | lo) >> 11;
    return (static_cast<double>(bits) + 0.5) * 0x1.0p-53;
}

double RngStream::uniform(double lo, double hi) { return lo + (hi - lo) * next_double(); }

std::uint64_t RngStream::next_below(std::uint64_t n) {
    if (n <= 1)
        return 0;
    // rejection sampling on 64-bit draws keeps the distribution exactly uniform
    std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    for (;;) {
        std::uint64_t hi = next_u32();
        std::uint64_t lo = next_u32();
        std::uint64_t x = (hi << 32) | lo;
        if (x < limit)
            return x % n;
    }
}

void RngStream::gaussian_pair(double &z0, double &z1) {
    // Box-Muller; u1 in (0,1] so the log is finite, u2 in [0,1)
    std::uint64_t hi = next_u32();
    std::uint64_t lo = next_u32();
    std::uint64_t bits = ((hi << 32) | lo) >> 11;
    double u1 = (static_cast<double>(bits) + 1.0) * 0x1.0p-53;
    double u2 = next_double();
    double r = std::sqrt(-2.0 * std::log(u1));
    z0 = r * std::cos(kTwoPi * u2);
    z1 = r * std::sin(kTwoPi * u2);
}

std::complex<double> RngStream::complex_normal(double variance) {
    double z0, z1;
    gaussian_pair(z0, z1);
    double s = std::sqrt(variance * 0.5);
    return {s * z0, s * z1};
}

double RngStream::laplace(double scale) {
    double v = next_open() - 0.5;
    double x = -std::log(1.0 - 2.0 * std::abs(v));
    return v < 0.0 ? -scale * x : scale * x;
}

double RngStream::exponential(double mean) { return -mean * std::log(next_open()); }

std::vector<std::complex<double>> sample_cn(RngStream &stream, std::size_t n, double variance) {
    if (variance < 0.0)
        throw std::invalid_argument("sample_cn: variance must be non-negative");
    std::vector<std::complex<double>> out(n);
    for (std::size_t i = 0; i < n; ++i)
        out[i] = stream.complex_normal(variance);
    return out;
}

} // namespace jhpf
