#include "jhpf/channel.hpp"
#include "jhpf/svd.hpp"

#include "test_util.hpp"

#include <cmath>
#include <cstdio>

using namespace jhpf;

static ScenarioParams uniform_scenario(std::size_t n_cl, std::size_t n_ray) {
    ScenarioParams sc;
    sc.n_cl = n_cl;
    sc.n_ray = n_ray;
    sc.cluster_power_decay_db = 0.0;
    sc.scenario_name = "test-uniform";
    return sc;
}

static void test_array_response() {
    auto v = array_response(0.0, 4, 0.5);
    for (const auto &z : v)
        CHECK(std::abs(z - cplx(0.5, 0.0)) < 1e-15);

    auto v2 = array_response(1.5707963267948966, 2, 0.5);
    CHECK(std::abs(v2[0] - cplx(1.0 / std::sqrt(2.0), 0.0)) < 1e-12);
    CHECK(std::abs(v2[1] - cplx(-1.0 / std::sqrt(2.0), 0.0)) < 1e-12);

    // sin(pi/6) = 1/2 exactly, so the phase step is exactly -pi/2
    auto v3 = array_response(0.52359877559829887, 4, 0.5);
    CHECK(std::abs(v3[0] - cplx(0.5, 0.0)) < 1e-12);
    CHECK(std::abs(v3[1] - cplx(0.0, -0.5)) < 1e-12);
    CHECK(std::abs(v3[2] - cplx(-0.5, 0.0)) < 1e-12);
    CHECK(std::abs(v3[3] - cplx(0.0, 0.5)) < 1e-12);

    double nrm = 0.0;
    for (const auto &z : array_response(0.7, 9, 0.5))
        nrm += std::norm(z);
    CHECK_NEAR(nrm, 1.0, 1e-14);
}

static void test_narrowband() {
    ScenarioParams sc = uniform_scenario(3, 20);

    RngStream s(11, 0);
    ChannelMatrix cm = gen_narrowband(32, 16, sc, s);
    CHECK(cm.h.rows() == 16 && cm.h.cols() == 32);
    CHECK(cm.h.all_finite());

    // regeneration from the recorded seed is bit-identical
    RngStream s2(cm.seed, cm.stream);
    ChannelMatrix cm2 = gen_narrowband(32, 16, sc, s2);
    CHECK(cm.h == cm2.h);

    // zero average power collapses every gain draw to zero
    ScenarioParams dead = sc;
    dead.avg_power_gain = 0.0;
    RngStream s3(11, 0);
    ChannelMatrix cz = gen_narrowband(8, 4, dead, s3);
    CHECK_NEAR(frob_norm(cz.h), 0.0, 0.0);

    // E ||H||_F^2 = n_t n_r under unit average power
    const std::size_t n_t = 8, n_r = 4;
    double acc = 0.0;
    const int draws = 10000;
    for (int i = 0; i < draws; ++i) {
        RngStream si(500, static_cast<std::uint64_t>(i));
        ChannelMatrix c = gen_narrowband(n_t, n_r, sc, si);
        double f = frob_norm(c.h);
        acc += f * f;
    }
    double mean = acc / draws;
    double expect = static_cast<double>(n_t * n_r);
    CHECK(mean > 0.95 * expect && mean < 1.05 * expect);

    // rank is bounded by the number of paths
    ScenarioParams sparse = uniform_scenario(1, 2);
    RngStream s4(77, 9);
    ChannelMatrix csp = gen_narrowband(6, 5, sparse, s4);
    SvdResult r = svd_compact(csp.h);
    CHECK(r.s[2] < 1e-10 * r.s[0]);
}

static void test_wideband() {
    ScenarioParams sc = uniform_scenario(3, 4);

    // zero delay spread: every subcarrier equals the narrowband draw
    ScenarioParams flat = sc;
    flat.delay_spread_s = 0.0;
    RngStream a(21, 3), b(21, 3);
    WidebandChannel wb = gen_wideband(8, 4, flat, 1, 100e6, a);
    ChannelMatrix nb = gen_narrowband(8, 4, flat, b);
    CHECK(wb.per_subcarrier.size() == 1);
    CHECK(wb.per_subcarrier[0].h == nb.h);

    RngStream c(22, 0);
    WidebandChannel wb4 = gen_wideband(8, 4, flat, 4, 100e6, c);
    for (std::size_t k = 1; k < 4; ++k)
        CHECK(wb4.per_subcarrier[k].h == wb4.per_subcarrier[0].h);

    RngStream d(23, 0);
    WidebandChannel wb64 = gen_wideband(8, 4, sc, 64, 100e6, d);
    CHECK(wb64.per_subcarrier.size() == 64);

    // single cluster: one unit-modulus phase factor cannot change the norm
    ScenarioParams one = uniform_scenario(1, 4);
    RngStream e(24, 0);
    WidebandChannel wb1 = gen_wideband(8, 4, one, 16, 100e6, e);
    double f0 = frob_norm(wb1.per_subcarrier[0].h);
    for (std::size_t k = 1; k < 16; ++k)
        CHECK_NEAR(frob_norm(wb1.per_subcarrier[k].h), f0, 1e-9 * f0);
}

static void test_presets() {
    ScenarioParams umi = scenario_preset("umi-like");
    ScenarioParams uma = scenario_preset("uma-like");
    CHECK(umi.n_cl == uma.n_cl && umi.n_ray == uma.n_ray);
    CHECK(umi.delay_spread_s < uma.delay_spread_s);
    CHECK(umi.angular_spread_rad < uma.angular_spread_rad);
    CHECK(umi.cluster_power_decay_db < uma.cluster_power_decay_db);
    CHECK_THROWS(scenario_preset("nonsense"));
}

static void test_perturb() {
    ScenarioParams sc = uniform_scenario(3, 8);
    RngStream s(31, 0);
    ChannelMatrix cm = gen_narrowband(8, 4, sc, s);

    RngStream p(32, 0);
    ChannelMatrix perfect = perturb_csi(cm, std::numeric_limits<double>::infinity(), p);
    CHECK(perfect.h == cm.h);

    double h2 = frob_norm(cm.h) * frob_norm(cm.h);
    for (double snr : {0.0, 20.0}) {
        double acc = 0.0;
        const int draws = 10000;
        for (int i = 0; i < draws; ++i) {
            RngStream pi(33, static_cast<std::uint64_t>(i));
            ChannelMatrix hat = perturb_csi(cm, snr, pi);
            CMatrix err = hat.h - cm.h;
            double f = frob_norm(err);
            acc += f * f;
        }
        double ratio = acc / draws / h2;
        double expect = std::pow(10.0, -snr / 10.0);
        CHECK(ratio > 0.9 * expect && ratio < 1.1 * expect);
    }
}

static void test_dataset_roundtrip() {
    ScenarioParams sc = scenario_preset("umi-like");
    ChannelDataset ds = gen_channel_dataset(8, 4, sc, 4, 100e6, 13, 99, 1000, 2);
    const std::string path = "test_channels.dat";
    write_channel_dataset(path, ds);
    ChannelDataset back = read_channel_dataset(path);
    CHECK(back.n_t == ds.n_t && back.n_r == ds.n_r && back.k == ds.k);
    CHECK(back.rng_id == ds.rng_id);
    CHECK(back.samples.size() == ds.samples.size());
    bool all_equal = true;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        for (std::size_t k = 0; k < 4; ++k)
            all_equal = all_equal &&
                        back.samples[i].per_subcarrier[k].h == ds.samples[i].per_subcarrier[k].h;
    CHECK(all_equal);

    std::uint64_t seed = 0, base = 0;
    CHECK(parse_rng_id(back.rng_id, seed, base));
    CHECK(seed == 99 && base == 1000);

    // dataset generation does not depend on the thread count
    ChannelDataset ds1 = gen_channel_dataset(8, 4, sc, 4, 100e6, 13, 99, 1000, 1);
    bool same = true;
    for (std::size_t i = 0; i < ds.samples.size(); ++i)
        for (std::size_t k = 0; k < 4; ++k)
            same = same && ds1.samples[i].per_subcarrier[k].h == ds.samples[i].per_subcarrier[k].h;
    CHECK(same);

    std::remove(path.c_str());
}

int main() {
    test_array_response();
    test_narrowband();
    test_wideband();
    test_presets();
    test_perturb();
    test_dataset_roundtrip();
    return testutil::summary("test_channel");
}
