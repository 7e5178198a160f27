#include "jhpf/channel.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <stdexcept>

#include <omp.h>

namespace jhpf {

namespace {
constexpr double kTwoPi = 6.283185307179586476925286766559;

struct ClusterDraws {
    // one flat gain/angle record per (cluster, ray)
    std::vector<double> aoa, aod;
    std::vector<cplx> gain;
    std::size_t n_cl = 0, n_ray = 0;
};

std::vector<double> cluster_power_weights(const ScenarioParams &sc) {
    std::vector<double> w(sc.n_cl);
    double sum = 0.0;
    for (std::size_t n = 0; n < sc.n_cl; ++n) {
        w[n] = std::pow(10.0, -sc.cluster_power_decay_db * static_cast<double>(n) / 10.0);
        sum += w[n];
    }
    // normalize to mean 1 so the average cluster power stays avg_power_gain
    for (auto &x : w)
        x *= static_cast<double>(sc.n_cl) / sum;
    return w;
}

ClusterDraws draw_clusters(const ScenarioParams &sc, RngStream &stream) {
    ClusterDraws d;
    d.n_cl = sc.n_cl;
    d.n_ray = sc.n_ray;
    d.aoa.resize(sc.n_cl * sc.n_ray);
    d.aod.resize(sc.n_cl * sc.n_ray);
    d.gain.resize(sc.n_cl * sc.n_ray);
    const double scale = sc.angular_spread_rad / std::sqrt(2.0);
    const auto weights = cluster_power_weights(sc);
    for (std::size_t n = 0; n < sc.n_cl; ++n) {
        double center_aoa = stream.uniform(0.0, kTwoPi);
        double center_aod = stream.uniform(0.0, kTwoPi);
        double var = sc.avg_power_gain * weights[n];
        for (std::size_t m = 0; m < sc.n_ray; ++m) {
            std::size_t idx = n * sc.n_ray + m;
            d.aoa[idx] = center_aoa + stream.laplace(scale);
            d.aod[idx] = center_aod + stream.laplace(scale);
            d.gain[idx] = stream.complex_normal(var);
        }
    }
    return d;
}

// sum_{rays} gain * a_R(aoa) a_T^H(aod), one matrix per cluster
std::vector<CMatrix> per_cluster_matrices(std::size_t n_t, std::size_t n_r,
                                          const ScenarioParams &sc, const ClusterDraws &d) {
    std::vector<CMatrix> out(sc.n_cl, CMatrix(n_r, n_t));
    for (std::size_t n = 0; n < sc.n_cl; ++n) {
        for (std::size_t m = 0; m < sc.n_ray; ++m) {
            std::size_t idx = n * sc.n_ray + m;
            auto ar = array_response(d.aoa[idx], n_r, sc.antenna_spacing_ratio);
            auto at = array_response(d.aod[idx], n_t, sc.antenna_spacing_ratio);
            cplx g = d.gain[idx];
            for (std::size_t i = 0; i < n_r; ++i) {
                cplx gi = g * ar[i];
                for (std::size_t j = 0; j < n_t; ++j)
                    out[n](i, j) += gi * std::conj(at[j]);
            }
        }
    }
    return out;
}

void write_u32(std::ostream &os, std::uint32_t v) { os.write(reinterpret_cast<const char *>(&v), 4); }
void write_u64(std::ostream &os, std::uint64_t v) { os.write(reinterpret_cast<const char *>(&v), 8); }
std::uint32_t read_u32(std::istream &is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char *>(&v), 4);
    return v;
}
std::uint64_t read_u64(std::istream &is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char *>(&v), 8);
    return v;
}

} // namespace

void ScenarioParams::validate() const {
    if (n_cl < 1 || n_ray < 1)
        throw std::invalid_argument("scenario: n_cl and n_ray must be >= 1");
    if (!(angular_spread_rad > 0.0) || angular_spread_rad >= 3.14159265358979323846)
        throw std::invalid_argument("scenario: angular spread must lie in (0, pi)");
    if (avg_power_gain < 0.0)
        throw std::invalid_argument("scenario: average power gain must be non-negative");
    if (delay_spread_s < 0.0)
        throw std::invalid_argument("scenario: delay spread must be non-negative");
    if (!(antenna_spacing_ratio > 0.0))
        throw std::invalid_argument("scenario: antenna spacing must be positive");
}

ScenarioParams scenario_preset(const std::string &name) {
    ScenarioParams sc;
    sc.scenario_name = name;
    if (name == "umi-like") {
        sc.delay_spread_s = 100e-9;
        sc.angular_spread_rad = 10.0 * kTwoPi / 360.0;
        sc.cluster_power_decay_db = 3.0;
    } else if (name == "uma-like") {
        sc.delay_spread_s = 300e-9;
        sc.angular_spread_rad = 15.0 * kTwoPi / 360.0;
        sc.cluster_power_decay_db = 6.0;
    } else {
        throw std::invalid_argument("unknown scenario preset: " + name);
    }
    return sc;
}

std::vector<cplx> array_response(double theta, std::size_t n_elems, double spacing_ratio) {
    if (n_elems < 1)
        throw std::invalid_argument("array_response: need at least one element");
    std::vector<cplx> v(n_elems);
    double norm = 1.0 / std::sqrt(static_cast<double>(n_elems));
    double step = -kTwoPi * spacing_ratio * std::sin(theta);
    for (std::size_t i = 0; i < n_elems; ++i) {
        double phase = step * static_cast<double>(i);
        v[i] = cplx(norm * std::cos(phase), norm * std::sin(phase));
    }
    return v;
}

ChannelMatrix gen_narrowband(std::size_t n_t, std::size_t n_r, const ScenarioParams &sc,
                             RngStream &stream) {
    if (n_t < 1 || n_r < 1)
        throw std::invalid_argument("gen_narrowband: dimensions must be positive");
    sc.validate();
    ChannelMatrix cm;
    cm.scenario_name = sc.scenario_name;
    cm.seed = stream.seed();
    cm.stream = stream.stream();

    ClusterDraws d = draw_clusters(sc, stream);
    auto mats = per_cluster_matrices(n_t, n_r, sc, d);
    double beta = std::sqrt(static_cast<double>(n_t * n_r) /
                            static_cast<double>(sc.n_cl * sc.n_ray));
    cm.h = CMatrix(n_r, n_t);
    for (std::size_t n = 0; n < sc.n_cl; ++n)
        for (std::size_t i = 0; i < n_r; ++i)
            for (std::size_t j = 0; j < n_t; ++j)
                cm.h(i, j) += beta * mats[n](i, j);
    return cm;
}

WidebandChannel gen_wideband(std::size_t n_t, std::size_t n_r, const ScenarioParams &sc,
                             std::size_t k_subcarriers, double sampling_rate_hz,
                             RngStream &stream) {
    if (k_subcarriers < 1)
        throw std::invalid_argument("gen_wideband: need at least one subcarrier");
    if (n_t < 1 || n_r < 1)
        throw std::invalid_argument("gen_wideband: dimensions must be positive");
    sc.validate();

    std::uint64_t seed = stream.seed(), sidx = stream.stream();
    ClusterDraws d = draw_clusters(sc, stream);

    // cluster delays come after the narrowband draws, sorted with tau_1 = 0
    std::vector<double> tau(sc.n_cl);
    for (std::size_t n = 0; n < sc.n_cl; ++n)
        tau[n] = stream.exponential(sc.delay_spread_s);
    std::sort(tau.begin(), tau.end());
    double tau0 = tau.front();
    for (auto &t : tau)
        t -= tau0;

    auto mats = per_cluster_matrices(n_t, n_r, sc, d);
    double beta = std::sqrt(static_cast<double>(n_t * n_r) /
                            static_cast<double>(sc.n_cl * sc.n_ray));

    WidebandChannel wb;
    wb.k_subcarriers = k_subcarriers;
    wb.sampling_rate_hz = sampling_rate_hz;
    wb.per_subcarrier.resize(k_subcarriers);
    for (std::size_t k = 0; k < k_subcarriers; ++k) {
        ChannelMatrix cm;
        cm.scenario_name = sc.scenario_name;
        cm.seed = seed;
        cm.stream = sidx;
        cm.h = CMatrix(n_r, n_t);
        for (std::size_t n = 0; n < sc.n_cl; ++n) {
            double phase = -kTwoPi * tau[n] * sampling_rate_hz * static_cast<double>(k) /
                           static_cast<double>(k_subcarriers);
            cplx rot = beta * cplx(std::cos(phase), std::sin(phase));
            for (std::size_t i = 0; i < n_r; ++i)
                for (std::size_t j = 0; j < n_t; ++j)
                    cm.h(i, j) += rot * mats[n](i, j);
        }
        wb.per_subcarrier[k] = std::move(cm);
    }
    return wb;
}

ChannelMatrix perturb_csi(const ChannelMatrix &h, double est_snr_db, RngStream &stream) {
    ChannelMatrix out = h;
    if (std::isinf(est_snr_db) && est_snr_db > 0.0)
        return out; // perfect-CSI sentinel
    double var = std::pow(10.0, -est_snr_db / 10.0) * frob_norm(h.h) * frob_norm(h.h) /
                 static_cast<double>(h.h.rows() * h.h.cols());
    for (std::size_t i = 0; i < h.h.rows(); ++i)
        for (std::size_t j = 0; j < h.h.cols(); ++j)
            out.h(i, j) += stream.complex_normal(var);
    return out;
}

WidebandChannel perturb_csi(const WidebandChannel &wb, double est_snr_db, RngStream &stream) {
    WidebandChannel out = wb;
    for (auto &cm : out.per_subcarrier)
        cm = perturb_csi(cm, est_snr_db, stream);
    return out;
}

std::string make_rng_id(std::uint64_t seed, std::uint64_t base_stream) {
    char buf[128];
    std::snprintf(buf, sizeof(buf), "%s/seed=%llu/base=%llu", RngStream::kAlgorithm,
                  static_cast<unsigned long long>(seed),
                  static_cast<unsigned long long>(base_stream));
    return buf;
}

bool parse_rng_id(const std::string &id, std::uint64_t &seed, std::uint64_t &base_stream) {
    std::string prefix = std::string(RngStream::kAlgorithm) + "/seed=";
    if (id.rfind(prefix, 0) != 0)
        return false;
    const char *p = id.c_str() + prefix.size();
    char *end = nullptr;
    seed = std::strtoull(p, &end, 10);
    if (!end || std::strncmp(end, "/base=", 6) != 0)
        return false;
    base_stream = std::strtoull(end + 6, &end, 10);
    return true;
}

ChannelDataset gen_channel_dataset(std::size_t n_t, std::size_t n_r, const ScenarioParams &sc,
                                   std::size_t k_subcarriers, double sampling_rate_hz,
                                   std::size_t count, std::uint64_t seed,
                                   std::uint64_t base_stream, int threads) {
    ChannelDataset ds;
    ds.n_t = static_cast<std::uint32_t>(n_t);
    ds.n_r = static_cast<std::uint32_t>(n_r);
    ds.k = static_cast<std::uint32_t>(k_subcarriers);
    ds.rng_id = make_rng_id(seed, base_stream);
    ds.samples.resize(count);

    if (threads <= 0)
        threads = omp_get_max_threads();
    // each sample owns stream index base + 4i; results do not depend on the
    // thread count
#pragma omp parallel for schedule(static) num_threads(threads)
    for (long long i = 0; i < static_cast<long long>(count); ++i) {
        RngStream s(seed, base_stream + 4ull * static_cast<std::uint64_t>(i));
        ds.samples[i] = gen_wideband(n_t, n_r, sc, k_subcarriers, sampling_rate_hz, s);
    }
    return ds;
}

void write_channel_dataset(const std::string &path, const ChannelDataset &ds) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw std::runtime_error("cannot open for writing: " + path);
    char magic[16] = {'J', 'H', 'P', 'F', 'D', 'A', 'T', '1', 0, 0, 0, 0, 0, 0, 0, 0};
    os.write(magic, 16);
    write_u32(os, 1u);
    write_u32(os, ds.n_t);
    write_u32(os, ds.n_r);
    write_u32(os, ds.k);
    write_u64(os, static_cast<std::uint64_t>(ds.samples.size()));
    write_u32(os, static_cast<std::uint32_t>(ds.rng_id.size()));
    os.write(ds.rng_id.data(), static_cast<std::streamsize>(ds.rng_id.size()));
    for (const auto &wb : ds.samples) {
        for (const auto &cm : wb.per_subcarrier) {
            for (std::size_t i = 0; i < cm.h.rows(); ++i) {
                for (std::size_t j = 0; j < cm.h.cols(); ++j) {
                    double re = cm.h(i, j).real(), im = cm.h(i, j).imag();
                    os.write(reinterpret_cast<const char *>(&re), 8);
                    os.write(reinterpret_cast<const char *>(&im), 8);
                }
            }
        }
    }
    if (!os)
        throw std::runtime_error("write failed: " + path);
}

ChannelDataset read_channel_dataset(const std::string &path) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("cannot open dataset: " + path);
    char magic[16];
    is.read(magic, 16);
    if (!is || std::memcmp(magic, "JHPFDAT1", 8) != 0)
        throw std::runtime_error("bad dataset magic: " + path);
    ChannelDataset ds;
    std::uint32_t version = read_u32(is);
    if (version != 1u)
        throw std::runtime_error("unsupported dataset version");
    ds.n_t = read_u32(is);
    ds.n_r = read_u32(is);
    ds.k = read_u32(is);
    std::uint64_t count = read_u64(is);
    std::uint32_t idlen = read_u32(is);
    ds.rng_id.resize(idlen);
    is.read(ds.rng_id.data(), idlen);

    std::uint64_t seed = 0, base = 0;
    bool have_seed = parse_rng_id(ds.rng_id, seed, base);

    ds.samples.resize(count);
    for (std::uint64_t n = 0; n < count; ++n) {
        WidebandChannel wb;
        wb.k_subcarriers = ds.k;
        wb.per_subcarrier.resize(ds.k);
        for (std::uint32_t k = 0; k < ds.k; ++k) {
            ChannelMatrix cm;
            cm.h = CMatrix(ds.n_r, ds.n_t);
            if (have_seed) {
                cm.seed = seed;
                cm.stream = base + 4ull * n;
            }
            for (std::size_t i = 0; i < ds.n_r; ++i) {
                for (std::size_t j = 0; j < ds.n_t; ++j) {
                    double re, im;
                    is.read(reinterpret_cast<char *>(&re), 8);
                    is.read(reinterpret_cast<char *>(&im), 8);
                    cm.h(i, j) = cplx(re, im);
                }
            }
            wb.per_subcarrier[k] = std::move(cm);
        }
        ds.samples[n] = std::move(wb);
    }
    if (!is)
        throw std::runtime_error("dataset truncated: " + path);
    return ds;
}

} // namespace jhpf
