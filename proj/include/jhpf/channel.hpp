#ifndef JHPF_CHANNEL_HPP
#define JHPF_CHANNEL_HPP

#include "jhpf/cmatrix.hpp"
#include "jhpf/rng.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace jhpf {

/// Clustered multipath scenario description. Two presets ship with the
/// project ("umi-like", "uma-like"); they differ only in these numbers.
struct ScenarioParams {
    std::size_t n_cl = 3;
    std::size_t n_ray = 20;
    double avg_power_gain = 1.0;        // average cluster power
    double cluster_power_decay_db = 0.0; // per-cluster decay, dB
    double angular_spread_rad = 0.1745;
    double delay_spread_s = 100e-9;
    double antenna_spacing_ratio = 0.5; // d / lambda
    std::string scenario_name = "custom";

    void validate() const;
};

ScenarioParams scenario_preset(const std::string &name);

struct ChannelMatrix {
    CMatrix h; // n_r x n_t
    std::string scenario_name;
    std::uint64_t seed = 0;
    std::uint64_t stream = 0;
};

struct WidebandChannel {
    std::vector<ChannelMatrix> per_subcarrier;
    std::size_t k_subcarriers = 0;
    double sampling_rate_hz = 0.0;
};

/// Uniform linear array response: element i is
/// (1/sqrt(n)) * exp(-j 2 pi spacing i sin(theta)); unit 2-norm.
std::vector<cplx> array_response(double theta, std::size_t n_elems, double spacing_ratio);

/// Narrowband clustered channel draw. Consumes, per cluster, two uniform
/// center angles, then per ray two Laplacian offsets and one complex gain.
ChannelMatrix gen_narrowband(std::size_t n_t, std::size_t n_r, const ScenarioParams &sc,
                             RngStream &stream);

/// Wideband channel: one draw of gains/angles shared by all subcarriers,
/// cluster delays drawn after them (so the K=1, zero-delay case reproduces
/// gen_narrowband bit-exactly), per-cluster phase exp(-j 2 pi tau fs k / K).
WidebandChannel gen_wideband(std::size_t n_t, std::size_t n_r, const ScenarioParams &sc,
                             std::size_t k_subcarriers, double sampling_rate_hz, RngStream &stream);

/// Additive estimation error: Hhat = H + E with E ~ CN(0, sigma_e^2) i.i.d.,
/// sigma_e^2 = 10^(-est_snr_db/10) * ||H||_F^2 / (n_t n_r).
/// An infinite est_snr_db is the "perfect CSI" sentinel and copies H exactly.
ChannelMatrix perturb_csi(const ChannelMatrix &h, double est_snr_db, RngStream &stream);

WidebandChannel perturb_csi(const WidebandChannel &wb, double est_snr_db, RngStream &stream);

// ---------- dataset file format ----------
//
// Little-endian binary. 16-byte magic ("JHPFDAT1" + zero padding), then
// u32 version, u32 n_t, u32 n_r, u32 k, u64 sample count, u32 RNG identifier
// length + identifier bytes, then per sample k*n_r*n_t entries as
// (f64 re, f64 im), subcarrier-major, row-major within each matrix.

struct ChannelDataset {
    std::uint32_t n_t = 0, n_r = 0, k = 1;
    std::string rng_id; // e.g. "pcg32-xsh-rr/seed=1/base=0"
    std::vector<WidebandChannel> samples;
};

void write_channel_dataset(const std::string &path, const ChannelDataset &ds);
ChannelDataset read_channel_dataset(const std::string &path);

/// RNG identifier string stored in dataset headers; parse_rng_id inverts it.
std::string make_rng_id(std::uint64_t seed, std::uint64_t base_stream);
bool parse_rng_id(const std::string &id, std::uint64_t &seed, std::uint64_t &base_stream);

/// Generate a dataset of `count` samples. Sample i draws its channel from
/// stream (seed, base + 4*i); slots base + 4*i + {1,2,3} are reserved for
/// the bit, noise, and subcarrier-index draws of the training loader.
ChannelDataset gen_channel_dataset(std::size_t n_t, std::size_t n_r, const ScenarioParams &sc,
                                   std::size_t k_subcarriers, double sampling_rate_hz,
                                   std::size_t count, std::uint64_t seed,
                                   std::uint64_t base_stream, int threads = 0);

} // namespace jhpf

#endif
