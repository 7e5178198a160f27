#ifndef JHPF_RNG_HPP
#define JHPF_RNG_HPP

#include <complex>
#include <cstdint>
#include <string>
#include <vector>

namespace jhpf {

/// Seeded, stream-indexed random source (PCG32, XSH-RR output function).
///
/// Every random quantity in the project flows through one of these streams.
/// The same (seed, stream) pair reproduces the same draw sequence bit-exactly
/// on any platform; distinct stream indices select distinct PCG increments
/// and can be consumed concurrently without coordination.
class RngStream {
  public:
    static constexpr const char *kAlgorithm = "pcg32-xsh-rr";

    RngStream(std::uint64_t seed, std::uint64_t stream);

    std::uint64_t seed() const { return seed_; }
    std::uint64_t stream() const { return stream_; }

    std::uint32_t next_u32();

    /// Uniform on [0,1) with 53 random bits.
    double next_double();

    /// Uniform on the open interval (0,1); never returns an endpoint.
    double next_open();

    /// Uniform on [lo,hi).
    double uniform(double lo, double hi);

    /// Fisher-Yates index draw: uniform integer in [0,n).
    std::uint64_t next_below(std::uint64_t n);

    /// One Box-Muller pair of independent N(0,1) draws.
    void gaussian_pair(double &z0, double &z1);

    /// Circular symmetric complex Gaussian CN(0, variance).
    std::complex<double> complex_normal(double variance);

    /// Zero-mean Laplacian with the given scale parameter.
    double laplace(double scale);

    /// Exponential with the given mean (mean = 0 gives exact zeros).
    double exponential(double mean);

  private:
    std::uint64_t state_;
    std::uint64_t inc_;
    std::uint64_t seed_;
    std::uint64_t stream_;
};

/// n i.i.d. draws from CN(0, variance). Throws on negative variance.
std::vector<std::complex<double>> sample_cn(RngStream &stream, std::size_t n, double variance);

} // namespace jhpf

#endif
