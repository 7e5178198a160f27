#include "jhpf/framework.hpp"
#include "jhpf/kernels.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace jhpf {

namespace {

// ---------- small row-major complex helpers (accumulate semantics) ----------

// C (m x n) += A (m x k) * B (k x n)
void acc_nn(const cplx *a, const cplx *b, cplx *c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t l = 0; l < k; ++l) {
            cplx ail = a[i * k + l];
            for (std::size_t j = 0; j < n; ++j)
                c[i * n + j] += ail * b[l * n + j];
        }
}

// C (m x n) += A^H * B with A stored (k x m), B stored (k x n)
void acc_hn(const cplx *a, const cplx *b, cplx *c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t l = 0; l < k; ++l)
        for (std::size_t i = 0; i < m; ++i) {
            cplx ali = std::conj(a[l * m + i]);
            for (std::size_t j = 0; j < n; ++j)
                c[i * n + j] += ali * b[l * n + j];
        }
}

// C (m x n) += A (m x k) * B^H with B stored (n x k)
void acc_nh(const cplx *a, const cplx *b, cplx *c, std::size_t m, std::size_t k, std::size_t n) {
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            cplx acc = 0.0;
            for (std::size_t l = 0; l < k; ++l)
                acc += a[i * k + l] * std::conj(b[j * k + l]);
            c[i * n + j] += acc;
        }
}

std::size_t scaled_width(std::size_t paper_width, double ratio) {
    double w = std::round(static_cast<double>(paper_width) * ratio);
    return static_cast<std::size_t>(std::max(16.0, w));
}

} // namespace

// ---------- config ----------

std::size_t SystemConfig::bits_per_symbol() const {
    std::size_t b = 0, m = m_order;
    while (m > 1) {
        m >>= 1;
        ++b;
    }
    return b;
}

void SystemConfig::validate() const {
    if (n_t == 0 || n_r == 0 || n_t_rf == 0 || n_r_rf == 0 || n_s == 0)
        throw std::invalid_argument("system config: all dimensions must be positive");
    if (n_t_rf > n_t || n_r_rf > n_r)
        throw std::invalid_argument("system config: RF chain count cannot exceed antennas");
    if (n_s > std::min(n_t_rf, n_r_rf))
        throw std::invalid_argument("system config: n_s must be <= min(n_t_rf, n_r_rf)");
    if (m_order != 4)
        throw std::invalid_argument("system config: only QPSK (m_order = 4) is supported");
    if (k_subcarriers == 0)
        throw std::invalid_argument("system config: need at least one subcarrier");
    if (anchor_subcarrier_q >= k_subcarriers)
        throw std::invalid_argument("system config: anchor subcarrier out of range");
}

// ---------- reshaping and custom operations ----------

std::vector<double> stack_real(const CMatrix &a) {
    std::vector<double> v(2 * a.size());
    for (std::size_t k = 0; k < a.size(); ++k) {
        v[k] = a.data()[k].real();
        v[a.size() + k] = a.data()[k].imag();
    }
    return v;
}

CMatrix unstack_real(const std::vector<double> &v, std::size_t rows, std::size_t cols) {
    if (v.size() != 2 * rows * cols)
        throw std::invalid_argument("unstack_real: length mismatch");
    CMatrix m(rows, cols);
    for (std::size_t k = 0; k < rows * cols; ++k)
        m.data()[k] = cplx(v[k], v[rows * cols + k]);
    return m;
}

CMatrix phases_to_analog(const std::vector<double> &phi, std::size_t n_ant, std::size_t n_rf) {
    if (phi.size() != n_ant * n_rf)
        throw std::invalid_argument("phases_to_analog: phase vector length mismatch");
    CMatrix m(n_ant, n_rf);
    double amp = 1.0 / std::sqrt(static_cast<double>(n_ant));
    for (std::size_t idx = 0; idx < phi.size(); ++idx) {
        std::size_t i = idx % n_ant, j = idx / n_ant; // column-major fill
        m(i, j) = cplx(amp * std::cos(phi[idx]), amp * std::sin(phi[idx]));
    }
    return m;
}

CMatrix combine_to_complex(const std::vector<double> &re, const std::vector<double> &im,
                           std::size_t rows, std::size_t cols) {
    if (re.size() != rows * cols || im.size() != rows * cols)
        throw std::invalid_argument("combine_to_complex: length mismatch");
    CMatrix m(rows, cols);
    for (std::size_t idx = 0; idx < re.size(); ++idx) {
        std::size_t i = idx % rows, j = idx / rows;
        m(i, j) = cplx(re[idx], im[idx]);
    }
    return m;
}

CMatrix equivalent_channel(const CMatrix &w_rf, const CMatrix &h, const CMatrix &f_rf) {
    if (h.rows() != w_rf.rows() || h.cols() != f_rf.rows())
        throw std::invalid_argument("equivalent_channel: dimension mismatch");
    return matmul(w_rf.hermitian(), matmul(h, f_rf));
}

CMatrix normalize_precoder(const CMatrix &f_rf, const CMatrix &f_bb_raw, std::size_t n_s) {
    double nrm = frob_norm(matmul(f_rf, f_bb_raw));
    if (nrm == 0.0)
        throw std::runtime_error("normalize_precoder: zero composite norm (degenerate input)");
    return f_bb_raw.scaled(std::sqrt(static_cast<double>(n_s)) / nrm);
}

// ---------- network shapes ----------

MlpSpec make_pp_spec(const SystemConfig &cfg, Act phase_act) {
    std::size_t in = 2 * cfg.n_t * cfg.n_r;
    double ratio = static_cast<double>(in) / 1024.0;
    MlpSpec s;
    s.layer_sizes = {in, scaled_width(512, ratio), scaled_width(256, ratio),
                     scaled_width(128, ratio), cfg.n_t * cfg.n_t_rf};
    s.output_activation = phase_act;
    return s;
}

MlpSpec make_cp_spec(const SystemConfig &cfg, Act phase_act) {
    std::size_t in = 2 * cfg.n_t * cfg.n_r;
    double ratio = static_cast<double>(in) / 1024.0;
    MlpSpec s;
    s.layer_sizes = {in,
                     scaled_width(512, ratio),
                     scaled_width(256, ratio),
                     scaled_width(128, ratio),
                     scaled_width(64, ratio),
                     cfg.n_r * cfg.n_r_rf};
    s.output_activation = phase_act;
    return s;
}

MlpSpec make_dp_spec(const SystemConfig &cfg) {
    std::size_t in = 2 * cfg.n_t_rf * cfg.n_r_rf;
    double ratio = static_cast<double>(in) / 18.0;
    MlpSpec s;
    s.layer_sizes = {in, scaled_width(20, ratio), scaled_width(40, ratio), scaled_width(20, ratio),
                     cfg.n_t_rf * cfg.n_s};
    s.output_activation = Act::linear;
    return s;
}

MlpSpec make_dc_spec(const SystemConfig &cfg) {
    MlpSpec s = make_dp_spec(cfg);
    s.layer_sizes.back() = cfg.n_r_rf * cfg.n_s;
    return s;
}

MlpSpec make_demod_spec(const SystemConfig &cfg) {
    std::size_t in = 2 * cfg.n_s;
    double ratio = static_cast<double>(in) / 6.0;
    MlpSpec s;
    s.layer_sizes = {in, scaled_width(20, ratio), scaled_width(50, ratio), scaled_width(20, ratio),
                     cfg.n_s * cfg.bits_per_symbol()};
    s.output_activation = Act::sigmoid;
    return s;
}

FrameworkParams make_framework(const SystemConfig &cfg, Act phase_act, std::uint64_t init_seed) {
    cfg.validate();
    if (phase_act != Act::relu && phase_act != Act::tanh_scaled)
        throw std::invalid_argument("phase activation must be relu or tanh_scaled");
    FrameworkParams fp;
    fp.cfg = cfg;
    fp.phase_activation = phase_act;
    std::uint64_t idx = 0;
    auto seed_net = [&](NetParams &n, const MlpSpec &spec) {
        RngStream s(init_seed, idx++);
        n.init(spec, s);
    };
    seed_net(fp.pp, make_pp_spec(cfg, phase_act));
    seed_net(fp.cp, make_cp_spec(cfg, phase_act));
    seed_net(fp.re_dp, make_dp_spec(cfg));
    seed_net(fp.im_dp, make_dp_spec(cfg));
    seed_net(fp.re_dc, make_dc_spec(cfg));
    seed_net(fp.im_dc, make_dc_spec(cfg));
    seed_net(fp.demod, make_demod_spec(cfg));
    return fp;
}

void FrameworkParams::set_mode(Mode m) {
    for_each_net([m](NetParams &n) { n.mode = m; });
}

FrameworkGrads FrameworkGrads::like(FrameworkParams &p) {
    FrameworkGrads g;
    g.pp = NetGrads::like(p.pp);
    g.cp = NetGrads::like(p.cp);
    g.re_dp = NetGrads::like(p.re_dp);
    g.im_dp = NetGrads::like(p.im_dp);
    g.re_dc = NetGrads::like(p.re_dc);
    g.im_dc = NetGrads::like(p.im_dc);
    g.demod = NetGrads::like(p.demod);
    return g;
}

void FrameworkGrads::zero() {
    for_each_net([](NetGrads &g) { g.zero(); });
}

// ---------- custom tape nodes ----------

namespace {

struct StackRealNode final : TapeNode {
    CId in;
    RId out;

    StackRealNode(CId i, RId o) : in(i), out(o) {}

    void forward(Tape &t) override {
        const CBatch &x = t.cv(in);
        RBatch &y = t.rv(out);
        const std::size_t rc = x.rows * x.cols;
#pragma omp parallel for schedule(static) if (x.batch > 1)
        for (long long b = 0; b < static_cast<long long>(x.batch); ++b) {
            const cplx *src = x.sample(b);
            double *dst = y.row(b);
            for (std::size_t k = 0; k < rc; ++k) {
                dst[k] = src[k].real();
                dst[rc + k] = src[k].imag();
            }
        }
    }
    void backward(Tape &t) override {
        CBatch &dx = t.cg(in);
        const RBatch &dy = t.rg(out);
        const std::size_t rc = dx.rows * dx.cols;
#pragma omp parallel for schedule(static) if (dx.batch > 1)
        for (long long b = 0; b < static_cast<long long>(dx.batch); ++b) {
            cplx *dst = dx.sample(b);
            const double *src = dy.row(b);
            for (std::size_t k = 0; k < rc; ++k)
                dst[k] += cplx(src[k], src[rc + k]);
        }
    }
};

// phi -> e^{j phi}, column-major reshape to (n_ant x n_rf); no amplitude yet
struct PhaseToUnitNode final : TapeNode {
    RId in;
    CId out;

    PhaseToUnitNode(RId i, CId o) : in(i), out(o) {}

    void forward(Tape &t) override {
        const RBatch &phi = t.rv(in);
        CBatch &u = t.cv(out);
        const std::size_t rows = u.rows;
#pragma omp parallel for schedule(static) if (u.batch > 1)
        for (long long b = 0; b < static_cast<long long>(u.batch); ++b) {
            const double *p = phi.row(b);
            cplx *dst = u.sample(b);
            for (std::size_t idx = 0; idx < phi.cols; ++idx) {
                std::size_t i = idx % rows, j = idx / rows;
                dst[i * u.cols + j] = cplx(std::cos(p[idx]), std::sin(p[idx]));
            }
        }
    }
    void backward(Tape &t) override {
        RBatch &dphi = t.rg(in);
        const CBatch &u = t.cv(out);
        const CBatch &du = t.cg(out);
        const std::size_t rows = u.rows;
#pragma omp parallel for schedule(static) if (u.batch > 1)
        for (long long b = 0; b < static_cast<long long>(u.batch); ++b) {
            double *dp = dphi.row(b);
            const cplx *uv = u.sample(b);
            const cplx *gv = du.sample(b);
            for (std::size_t idx = 0; idx < dphi.cols; ++idx) {
                std::size_t i = idx % rows, j = idx / rows;
                cplx e = uv[i * u.cols + j], g = gv[i * u.cols + j];
                dp[idx] += -e.imag() * g.real() + e.real() * g.imag();
            }
        }
    }
};

struct CScaleNode final : TapeNode {
    CId in, out;
    double factor;

    CScaleNode(CId i, CId o, double f) : in(i), out(o), factor(f) {}

    void forward(Tape &t) override {
        const CBatch &x = t.cv(in);
        CBatch &y = t.cv(out);
        for (std::size_t k = 0; k < x.v.size(); ++k)
            y.v[k] = factor * x.v[k];
    }
    void backward(Tape &t) override {
        CBatch &dx = t.cg(in);
        const CBatch &dy = t.cg(out);
        for (std::size_t k = 0; k < dx.v.size(); ++k)
            dx.v[k] += factor * dy.v[k];
    }
};

// (re, im) vector pair -> complex matrix, column-major reshape
struct CombineToComplexNode final : TapeNode {
    RId re, im;
    CId out;

    CombineToComplexNode(RId r, RId i, CId o) : re(r), im(i), out(o) {}

    void forward(Tape &t) override {
        const RBatch &xr = t.rv(re);
        const RBatch &xi = t.rv(im);
        CBatch &y = t.cv(out);
        const std::size_t rows = y.rows;
        for (std::size_t b = 0; b < y.batch; ++b) {
            const double *pr = xr.row(b);
            const double *pi = xi.row(b);
            cplx *dst = y.sample(b);
            for (std::size_t idx = 0; idx < xr.cols; ++idx) {
                std::size_t i = idx % rows, j = idx / rows;
                dst[i * y.cols + j] = cplx(pr[idx], pi[idx]);
            }
        }
    }
    void backward(Tape &t) override {
        RBatch &dr = t.rg(re);
        RBatch &di = t.rg(im);
        const CBatch &dy = t.cg(out);
        const std::size_t rows = dy.rows;
        for (std::size_t b = 0; b < dy.batch; ++b) {
            double *pr = dr.row(b);
            double *pi = di.row(b);
            const cplx *g = dy.sample(b);
            for (std::size_t idx = 0; idx < dr.cols; ++idx) {
                std::size_t i = idx % rows, j = idx / rows;
                pr[idx] += g[i * dy.cols + j].real();
                pi[idx] += g[i * dy.cols + j].imag();
            }
        }
    }
};

// H_eq = W_RF^H H F_RF with H a per-sample constant
struct HeqNode final : TapeNode {
    CId w_rf, f_rf, h, out;
    CBatch hf; // cached H * F_RF per sample

    HeqNode(CId w, CId f, CId h_, CId o) : w_rf(w), f_rf(f), h(h_), out(o) {}

    void forward(Tape &t) override {
        const CBatch &w = t.cv(w_rf);
        const CBatch &f = t.cv(f_rf);
        const CBatch &hc = t.cv(h);
        CBatch &y = t.cv(out);
        const std::size_t n_r = hc.rows, n_t = hc.cols, n_trf = f.cols, n_rrf = w.cols;
        hf = CBatch(w.batch, n_r, n_trf);
#pragma omp parallel for schedule(static) if (w.batch > 1)
        for (long long b = 0; b < static_cast<long long>(w.batch); ++b) {
            acc_nn(hc.sample(b), f.sample(b), hf.sample(b), n_r, n_t, n_trf);
            std::fill(y.sample(b), y.sample(b) + n_rrf * n_trf, cplx(0.0, 0.0));
            acc_hn(w.sample(b), hf.sample(b), y.sample(b), n_rrf, n_r, n_trf);
        }
    }
    void backward(Tape &t) override {
        const CBatch &w = t.cv(w_rf);
        const CBatch &hc = t.cv(h);
        CBatch &dw = t.cg(w_rf);
        CBatch &df = t.cg(f_rf);
        const CBatch &dy = t.cg(out);
        const std::size_t n_r = hc.rows, n_t = hc.cols, n_trf = df.cols, n_rrf = w.cols;
#pragma omp parallel for schedule(static) if (w.batch > 1)
        for (long long b = 0; b < static_cast<long long>(w.batch); ++b) {
            // G_W += (H F) G^H ; G_F += (H^H W) G
            acc_nh(hf.sample(b), dy.sample(b), dw.sample(b), n_r, n_trf, n_rrf);
            std::vector<cplx> hw(n_t * n_rrf, cplx(0.0, 0.0));
            acc_hn(hc.sample(b), w.sample(b), hw.data(), n_t, n_r, n_rrf);
            acc_nn(hw.data(), dy.sample(b), df.sample(b), n_t, n_rrf, n_trf);
        }
    }
};

// F_BB = sqrt(n_s)/||F_RF Fbar||_F * Fbar
struct NormalizePrecoderNode final : TapeNode {
    CId f_rf, f_bb_raw, out;
    std::size_t n_s;
    CBatch composite;          // F_RF * Fbar per sample
    std::vector<double> norms; // ||F_RF Fbar||_F per sample

    NormalizePrecoderNode(CId f, CId raw, CId o, std::size_t ns)
        : f_rf(f), f_bb_raw(raw), out(o), n_s(ns) {}

    void forward(Tape &t) override {
        const CBatch &f = t.cv(f_rf);
        const CBatch &raw = t.cv(f_bb_raw);
        CBatch &y = t.cv(out);
        const std::size_t n_t = f.rows, n_trf = f.cols;
        composite = CBatch(f.batch, n_t, n_s);
        norms.assign(f.batch, 0.0);
        double root_ns = std::sqrt(static_cast<double>(n_s));
        for (std::size_t b = 0; b < f.batch; ++b) {
            acc_nn(f.sample(b), raw.sample(b), composite.sample(b), n_t, n_trf, n_s);
            double acc = 0.0;
            for (std::size_t k = 0; k < n_t * n_s; ++k)
                acc += std::norm(composite.sample(b)[k]);
            double nrm = std::sqrt(acc);
            if (nrm == 0.0)
                throw std::runtime_error("normalize_precoder: zero composite norm");
            norms[b] = nrm;
            double s = root_ns / nrm;
            for (std::size_t k = 0; k < n_trf * n_s; ++k)
                y.sample(b)[k] = s * raw.sample(b)[k];
        }
    }
    void backward(Tape &t) override {
        const CBatch &f = t.cv(f_rf);
        const CBatch &raw = t.cv(f_bb_raw);
        CBatch &dfrf = t.cg(f_rf);
        CBatch &draw = t.cg(f_bb_raw);
        const CBatch &dy = t.cg(out);
        const std::size_t n_t = f.rows, n_trf = f.cols;
        double root_ns = std::sqrt(static_cast<double>(n_s));
        for (std::size_t b = 0; b < f.batch; ++b) {
            const cplx *g = dy.sample(b);
            const cplx *rawb = raw.sample(b);
            double nrm = norms[b];
            double s = root_ns / nrm;
            // dL/d||.|| through the scale factor
            double dldn = 0.0;
            for (std::size_t k = 0; k < n_trf * n_s; ++k)
                dldn += g[k].real() * rawb[k].real() + g[k].imag() * rawb[k].imag();
            dldn *= -root_ns / (nrm * nrm);
            // direct term
            for (std::size_t k = 0; k < n_trf * n_s; ++k)
                draw.sample(b)[k] += s * g[k];
            // norm term: carrier at the composite is (dL/dn) * P / n
            std::vector<cplx> gp(n_t * n_s);
            for (std::size_t k = 0; k < n_t * n_s; ++k)
                gp[k] = (dldn / nrm) * composite.sample(b)[k];
            acc_hn(f.sample(b), gp.data(), draw.sample(b), n_trf, n_t, n_s);
            acc_nh(gp.data(), rawb, dfrf.sample(b), n_t, n_s, n_trf);
        }
    }
};

// r = sqrt(P) W_BB^H W_RF^H H F_RF F_BB x + W_BB^H W_RF^H n
struct TransmitReceiveNode final : TapeNode {
    CId f_rf, f_bb, w_rf, w_bb;
    CId h, x, noise;
    double sqrt_p;
    CId out;
    CBatch v, y, z; // cached intermediates (z = W_RF^H y feeds oracle checks)

    TransmitReceiveNode(CId frf, CId fbb, CId wrf, CId wbb, CId h_, CId x_, CId n_, double sp,
                        CId o)
        : f_rf(frf), f_bb(fbb), w_rf(wrf), w_bb(wbb), h(h_), x(x_), noise(n_), sqrt_p(sp), out(o) {}

    void forward(Tape &t) override {
        const CBatch &frf = t.cv(f_rf);
        const CBatch &fbb = t.cv(f_bb);
        const CBatch &wrf = t.cv(w_rf);
        const CBatch &wbb = t.cv(w_bb);
        const CBatch &hc = t.cv(h);
        const CBatch &xc = t.cv(x);
        const CBatch &nc = t.cv(noise);
        CBatch &r = t.cv(out);
        const std::size_t n_t = frf.rows, n_trf = frf.cols, n_r = wrf.rows, n_rrf = wrf.cols,
                          ns = fbb.cols;
        v = CBatch(frf.batch, n_trf, 1);
        y = CBatch(frf.batch, n_r, 1);
        z = CBatch(frf.batch, n_rrf, 1);
#pragma omp parallel for schedule(static) if (frf.batch > 1)
        for (long long b = 0; b < static_cast<long long>(frf.batch); ++b) {
            acc_nn(fbb.sample(b), xc.sample(b), v.sample(b), n_trf, ns, 1);
            std::vector<cplx> u(n_t, cplx(0.0, 0.0));
            acc_nn(frf.sample(b), v.sample(b), u.data(), n_t, n_trf, 1);
            std::vector<cplx> hu(n_r, cplx(0.0, 0.0));
            acc_nn(hc.sample(b), u.data(), hu.data(), n_r, n_t, 1);
            for (std::size_t i = 0; i < n_r; ++i)
                y.sample(b)[i] = sqrt_p * hu[i] + nc.sample(b)[i];
            acc_hn(wrf.sample(b), y.sample(b), z.sample(b), n_rrf, n_r, 1);
            std::fill(r.sample(b), r.sample(b) + ns, cplx(0.0, 0.0));
            acc_hn(wbb.sample(b), z.sample(b), r.sample(b), ns, n_rrf, 1);
        }
    }
    void backward(Tape &t) override {
        const CBatch &frf = t.cv(f_rf);
        const CBatch &fbb = t.cv(f_bb);
        const CBatch &wrf = t.cv(w_rf);
        const CBatch &wbb = t.cv(w_bb);
        const CBatch &hc = t.cv(h);
        const CBatch &xc = t.cv(x);
        CBatch &dfrf = t.cg(f_rf);
        CBatch &dfbb = t.cg(f_bb);
        CBatch &dwrf = t.cg(w_rf);
        CBatch &dwbb = t.cg(w_bb);
        const CBatch &dr = t.cg(out);
        const std::size_t n_t = frf.rows, n_trf = frf.cols, n_r = wrf.rows, n_rrf = wrf.cols,
                          ns = fbb.cols;
#pragma omp parallel for schedule(static) if (frf.batch > 1)
        for (long long b = 0; b < static_cast<long long>(frf.batch); ++b) {
            const cplx *gr = dr.sample(b);
            std::vector<cplx> gz(n_rrf, cplx(0.0, 0.0));
            acc_nn(wbb.sample(b), gr, gz.data(), n_rrf, ns, 1);
            acc_nh(z.sample(b), gr, dwbb.sample(b), n_rrf, 1, ns);
            std::vector<cplx> gy(n_r, cplx(0.0, 0.0));
            acc_nn(wrf.sample(b), gz.data(), gy.data(), n_r, n_rrf, 1);
            acc_nh(y.sample(b), gz.data(), dwrf.sample(b), n_r, 1, n_rrf);
            std::vector<cplx> gu(n_t, cplx(0.0, 0.0));
            acc_hn(hc.sample(b), gy.data(), gu.data(), n_t, n_r, 1);
            for (auto &g : gu)
                g *= sqrt_p;
            acc_nh(gu.data(), v.sample(b), dfrf.sample(b), n_t, 1, n_trf);
            std::vector<cplx> gv(n_trf, cplx(0.0, 0.0));
            acc_hn(frf.sample(b), gu.data(), gv.data(), n_trf, n_t, 1);
            acc_nh(gv.data(), xc.sample(b), dfbb.sample(b), n_trf, 1, ns);
        }
    }
};

} // namespace

// ---------- forward assembly ----------

HybridWeights ForwardTrace::weights(std::size_t b) const {
    HybridWeights w;
    w.f_rf = tape->cv(f_rf).matrix(b);
    w.f_bb = tape->cv(f_bb).matrix(b);
    w.w_rf = tape->cv(w_rf).matrix(b);
    w.w_bb = tape->cv(w_bb).matrix(b);
    return w;
}

ForwardTrace framework_forward(FrameworkParams &fp, FrameworkGrads *grads,
                               const std::vector<const TrainingSample *> &batch, double power,
                               bool with_loss) {
    const SystemConfig &cfg = fp.cfg;
    const std::size_t nb = batch.size();
    if (nb == 0)
        throw std::invalid_argument("framework_forward: empty batch");

    ForwardTrace tr;
    tr.tape = std::make_unique<Tape>();
    Tape &t = *tr.tape;
    tr.batch = nb;

    // constant leaves
    CId anchor = t.new_cplx(nb, cfg.n_r, cfg.n_t);
    CId hdata = t.new_cplx(nb, cfg.n_r, cfg.n_t);
    CId xsym = t.new_cplx(nb, cfg.n_s, 1);
    CId nz = t.new_cplx(nb, cfg.n_r, 1);
    RBatch targets(nb, cfg.bits_per_use());
    for (std::size_t b = 0; b < nb; ++b) {
        const TrainingSample &s = *batch[b];
        t.cv(anchor).set_matrix(b, s.h_anchor);
        t.cv(hdata).set_matrix(b, s.h_data);
        auto x = modulate(s.bits, cfg.m_order);
        std::copy(x.begin(), x.end(), t.cv(xsym).sample(b));
        if (s.noise.size() != cfg.n_r)
            throw std::invalid_argument("framework_forward: noise length mismatch");
        std::copy(s.noise.begin(), s.noise.end(), t.cv(nz).sample(b));
        for (std::size_t k = 0; k < s.bits.total(); ++k)
            targets.v[b * targets.cols + k] = s.bits.bits[k];
    }

    // analog designer
    RId sa = t.new_real(nb, 2 * cfg.n_t * cfg.n_r);
    t.emplace<StackRealNode>(anchor, sa);
    tr.phi_p = append_mlp(t, fp.pp, grads ? &grads->pp : nullptr, sa);
    tr.phi_c = append_mlp(t, fp.cp, grads ? &grads->cp : nullptr, sa);

    tr.unit_p = t.new_cplx(nb, cfg.n_t, cfg.n_t_rf);
    t.emplace<PhaseToUnitNode>(tr.phi_p, tr.unit_p);
    tr.f_rf = t.new_cplx(nb, cfg.n_t, cfg.n_t_rf);
    t.emplace<CScaleNode>(tr.unit_p, tr.f_rf, 1.0 / std::sqrt(static_cast<double>(cfg.n_t)));

    tr.unit_c = t.new_cplx(nb, cfg.n_r, cfg.n_r_rf);
    t.emplace<PhaseToUnitNode>(tr.phi_c, tr.unit_c);
    tr.w_rf = t.new_cplx(nb, cfg.n_r, cfg.n_r_rf);
    t.emplace<CScaleNode>(tr.unit_c, tr.w_rf, 1.0 / std::sqrt(static_cast<double>(cfg.n_r)));

    // digital designer on the equivalent channel
    tr.heq = t.new_cplx(nb, cfg.n_r_rf, cfg.n_t_rf);
    t.emplace<HeqNode>(tr.w_rf, tr.f_rf, hdata, tr.heq);
    RId sh = t.new_real(nb, 2 * cfg.n_t_rf * cfg.n_r_rf);
    t.emplace<StackRealNode>(tr.heq, sh);

    RId f_re = append_mlp(t, fp.re_dp, grads ? &grads->re_dp : nullptr, sh);
    RId f_im = append_mlp(t, fp.im_dp, grads ? &grads->im_dp : nullptr, sh);
    RId w_re = append_mlp(t, fp.re_dc, grads ? &grads->re_dc : nullptr, sh);
    RId w_im = append_mlp(t, fp.im_dc, grads ? &grads->im_dc : nullptr, sh);

    tr.f_bb_raw = t.new_cplx(nb, cfg.n_t_rf, cfg.n_s);
    t.emplace<CombineToComplexNode>(f_re, f_im, tr.f_bb_raw);
    tr.w_bb = t.new_cplx(nb, cfg.n_r_rf, cfg.n_s);
    t.emplace<CombineToComplexNode>(w_re, w_im, tr.w_bb);

    tr.f_bb = t.new_cplx(nb, cfg.n_t_rf, cfg.n_s);
    t.emplace<NormalizePrecoderNode>(tr.f_rf, tr.f_bb_raw, tr.f_bb, cfg.n_s);

    // signal flow and demodulation
    tr.r = t.new_cplx(nb, cfg.n_s, 1);
    auto *txrx = t.emplace<TransmitReceiveNode>(tr.f_rf, tr.f_bb, tr.w_rf, tr.w_bb, hdata, xsym,
                                                nz, std::sqrt(power), tr.r);
    RId sr = t.new_real(nb, 2 * cfg.n_s);
    t.emplace<StackRealNode>(tr.r, sr);
    tr.probs = append_mlp(t, fp.demod, grads ? &grads->demod : nullptr, sr);

    if (with_loss)
        append_bce(t, tr.probs, targets);

    t.run_forward();
    tr.loss = t.loss;
    tr.z = txrx->z;
    return tr;
}

// ---------- training data ----------

TrainingSet build_training_set(const ChannelDataset &ds, const SystemConfig &cfg) {
    cfg.validate();
    if (ds.n_t != cfg.n_t || ds.n_r != cfg.n_r || ds.k != cfg.k_subcarriers)
        throw std::invalid_argument("build_training_set: dataset does not match system config");
    std::uint64_t seed = 0, base = 0;
    if (!parse_rng_id(ds.rng_id, seed, base))
        throw std::invalid_argument("build_training_set: unparsable RNG identifier: " + ds.rng_id);

    TrainingSet out;
    out.samples.resize(ds.samples.size());
#pragma omp parallel for schedule(static)
    for (long long i = 0; i < static_cast<long long>(ds.samples.size()); ++i) {
        const WidebandChannel &wb = ds.samples[i];
        TrainingSample s;
        std::uint64_t slot = base + 4ull * static_cast<std::uint64_t>(i);
        RngStream bits_stream(seed, slot + 1);
        s.bits = random_bits(bits_stream, cfg.n_s, cfg.m_order);
        RngStream noise_stream(seed, slot + 2);
        s.noise = sample_cn(noise_stream, cfg.n_r, 1.0);
        if (cfg.k_subcarriers > 1) {
            RngStream sub_stream(seed, slot + 3);
            s.subcarrier_index = sub_stream.next_below(cfg.k_subcarriers);
        }
        s.h_anchor = wb.per_subcarrier[cfg.anchor_subcarrier_q].h;
        s.h_data = wb.per_subcarrier[s.subcarrier_index].h;
        out.samples[i] = std::move(s);
    }
    return out;
}

// ---------- training ----------

namespace {

struct EvalOutcome {
    double bce = 0.0;
    double ber = 0.0;
};

EvalOutcome evaluate_set(FrameworkParams &fp, const TrainingSet &set, double power,
                         std::size_t batch_size) {
    fp.set_mode(Mode::infer);
    double bce_sum = 0.0;
    std::size_t errors = 0, total = 0;
    for (std::size_t start = 0; start < set.samples.size(); start += batch_size) {
        std::size_t stop = std::min(set.samples.size(), start + batch_size);
        std::vector<const TrainingSample *> chunk;
        chunk.reserve(stop - start);
        for (std::size_t i = start; i < stop; ++i)
            chunk.push_back(&set.samples[i]);
        ForwardTrace trc = framework_forward(fp, nullptr, chunk, power, true);
        bce_sum += trc.loss * static_cast<double>(chunk.size());
        const RBatch &probs = trc.probabilities();
        for (std::size_t b = 0; b < chunk.size(); ++b) {
            const BitBlock &bits = chunk[b]->bits;
            for (std::size_t k = 0; k < bits.total(); ++k) {
                int hard = probs.at(b, k) >= 0.5 ? 1 : 0;
                errors += static_cast<std::size_t>(hard != bits.bits[k]);
                ++total;
            }
        }
    }
    EvalOutcome out;
    out.bce = bce_sum / static_cast<double>(set.samples.size());
    out.ber = total ? static_cast<double>(errors) / static_cast<double>(total) : 0.0;
    return out;
}

void constraint_errors(const ForwardTrace &trc, const SystemConfig &cfg, double &mod_err,
                       double &pow_err) {
    const CBatch &frf = trc.tape->cv(trc.f_rf);
    const CBatch &wrf = trc.tape->cv(trc.w_rf);
    const CBatch &fbb = trc.tape->cv(trc.f_bb);
    double ft = 1.0 / std::sqrt(static_cast<double>(cfg.n_t));
    double wt = 1.0 / std::sqrt(static_cast<double>(cfg.n_r));
    for (std::size_t k = 0; k < frf.v.size(); ++k)
        mod_err = std::max(mod_err, std::abs(std::abs(frf.v[k]) - ft));
    for (std::size_t k = 0; k < wrf.v.size(); ++k)
        mod_err = std::max(mod_err, std::abs(std::abs(wrf.v[k]) - wt));
    for (std::size_t b = 0; b < trc.batch; ++b) {
        std::vector<cplx> comp(cfg.n_t * cfg.n_s, cplx(0.0, 0.0));
        acc_nn(frf.sample(b), fbb.sample(b), comp.data(), cfg.n_t, cfg.n_t_rf, cfg.n_s);
        double acc = 0.0;
        for (const auto &zc : comp)
            acc += std::norm(zc);
        pow_err = std::max(pow_err, std::abs(acc - static_cast<double>(cfg.n_s)));
    }
}

} // namespace

TrainResult train_framework(FrameworkParams fp, const TrainingSet &train_set,
                            const TrainingSet &val_set, const TrainHparams &hp) {
    if (train_set.samples.empty() || val_set.samples.empty())
        throw std::invalid_argument("train_framework: empty dataset");
    if (hp.batch_size == 0 || hp.epochs == 0)
        throw std::invalid_argument("train_framework: batch size and epochs must be positive");

    const double power = snr_to_power(hp.train_snr_db);
    FrameworkGrads grads = FrameworkGrads::like(fp);

    std::vector<NetParams *> nets;
    std::vector<NetGrads *> gnets;
    fp.for_each_net([&](NetParams &n) { nets.push_back(&n); });
    grads.for_each_net([&](NetGrads &g) { gnets.push_back(&g); });
    std::vector<AdamState> states;
    for (auto *n : nets)
        states.push_back(AdamState::like(*n));

    TrainResult res;
    EvalOutcome init_eval = evaluate_set(fp, val_set, power, hp.batch_size);
    EpochStats init_stats;
    init_stats.epoch = 0;
    init_stats.train_bce = std::numeric_limits<double>::quiet_NaN();
    init_stats.val_bce = init_eval.bce;
    init_stats.val_ber = init_eval.ber;
    res.history.push_back(init_stats);

    double best_val = init_eval.bce;
    res.params = fp;

    RngStream shuffle(hp.shuffle_seed, 0);
    std::vector<std::size_t> order(train_set.samples.size());
    std::iota(order.begin(), order.end(), 0);

    for (std::size_t epoch = 1; epoch <= hp.epochs; ++epoch) {
        double lr = epoch >= hp.lr_switch_epoch ? hp.lr_final : hp.lr_initial;
        fp.set_mode(Mode::train);

        // Fisher-Yates from the dedicated shuffle stream
        for (std::size_t i = order.size(); i > 1; --i) {
            std::size_t j = shuffle.next_below(i);
            std::swap(order[i - 1], order[j]);
        }

        double loss_acc = 0.0;
        EpochStats stats;
        stats.epoch = epoch;
        for (std::size_t start = 0; start < order.size(); start += hp.batch_size) {
            std::size_t stop = std::min(order.size(), start + hp.batch_size);
            std::vector<const TrainingSample *> chunk;
            chunk.reserve(stop - start);
            for (std::size_t i = start; i < stop; ++i)
                chunk.push_back(&train_set.samples[order[i]]);

            grads.zero();
            ForwardTrace trc = framework_forward(fp, &grads, chunk, power, true);
            trc.tape->run_backward();
            loss_acc += trc.loss * static_cast<double>(chunk.size());
            constraint_errors(trc, fp.cfg, stats.max_modulus_err, stats.max_power_err);

            for (std::size_t n = 0; n < nets.size(); ++n)
                adam_step(*nets[n], *gnets[n], states[n], lr);
        }
        stats.train_bce = loss_acc / static_cast<double>(order.size());

        EvalOutcome ev = evaluate_set(fp, val_set, power, hp.batch_size);
        stats.val_bce = ev.bce;
        stats.val_ber = ev.ber;
        if (!std::isfinite(ev.bce) || !std::isfinite(stats.train_bce))
            throw std::runtime_error("train_framework: diverged (non-finite loss) at epoch " +
                                     std::to_string(epoch));
        res.history.push_back(stats);
        if (ev.bce < best_val) {
            best_val = ev.bce;
            res.params = fp;
        }
    }
    res.params.set_mode(Mode::infer);
    return res;
}

void write_history_csv(const std::string &path, const std::vector<EpochStats> &history) {
    std::ofstream os(path, std::ios::trunc);
    if (!os)
        throw std::runtime_error("cannot write history: " + path);
    os << "epoch,train_bce,val_bce,val_ber\n";
    for (const auto &h : history) {
        os << h.epoch << ',';
        if (std::isnan(h.train_bce))
            os << "";
        else
            os << h.train_bce;
        os << ',' << h.val_bce << ',' << h.val_ber << '\n';
    }
}

// ---------- inference ----------

std::vector<double> net_infer(const NetParams &p, const std::vector<double> &input) {
    const MlpSpec &spec = p.spec;
    if (input.size() != spec.input_size())
        throw std::invalid_argument("net_infer: input width mismatch");
    std::vector<double> cur = input;
    const std::size_t n = spec.n_dense();
    std::size_t bn_idx = 0;
    for (std::size_t l = 0; l < n; ++l) {
        const DenseLayer &d = p.dense[l];
        std::vector<double> next(d.out);
        kernels::dense_forward(cur.data(), d.w.data(), d.b.data(), next.data(), 1, d.in, d.out);
        cur = std::move(next);
        bool hidden = l + 1 < n;
        if (hidden && spec.batch_norm_after_hidden) {
            const BnLayer &lb = p.bn[bn_idx++];
            for (std::size_t f = 0; f < d.out; ++f) {
                double s = 1.0 / std::sqrt(lb.run_var[f] + kBnEps);
                cur[f] = lb.gamma[f] * (cur[f] - lb.run_mean[f]) * s + lb.beta[f];
            }
        }
        Act act = hidden ? spec.hidden_activation : spec.output_activation;
        if (act != Act::linear)
            for (auto &xv : cur)
                xv = act_apply(act, xv);
    }
    return cur;
}

HybridWeights HybridDesign::weights(std::size_t k) const {
    HybridWeights w;
    if (mode == AnalogMode::unified) {
        w.f_rf = f_rf;
        w.w_rf = w_rf;
    } else {
        w.f_rf = f_rf_k[k];
        w.w_rf = w_rf_k[k];
    }
    w.f_bb = f_bb[k];
    w.w_bb = w_bb[k];
    return w;
}

HybridDesign design_hybrid(const FrameworkParams &fp, const WidebandChannel &csi,
                           AnalogMode mode) {
    const SystemConfig &cfg = fp.cfg;
    const std::size_t k_total = csi.per_subcarrier.size();
    if (k_total == 0)
        throw std::invalid_argument("design_hybrid: empty channel");
    HybridDesign d;
    d.mode = mode;

    auto design_analog = [&](const CMatrix &h, CMatrix &frf, CMatrix &wrf) {
        auto sa = stack_real(h);
        auto phi_p = net_infer(fp.pp, sa);
        auto phi_c = net_infer(fp.cp, sa);
        frf = phases_to_analog(phi_p, cfg.n_t, cfg.n_t_rf);
        wrf = phases_to_analog(phi_c, cfg.n_r, cfg.n_r_rf);
    };

    if (mode == AnalogMode::unified) {
        std::size_t q = std::min(cfg.anchor_subcarrier_q, k_total - 1);
        design_analog(csi.per_subcarrier[q].h, d.f_rf, d.w_rf);
    } else {
        d.f_rf_k.resize(k_total);
        d.w_rf_k.resize(k_total);
        for (std::size_t k = 0; k < k_total; ++k)
            design_analog(csi.per_subcarrier[k].h, d.f_rf_k[k], d.w_rf_k[k]);
    }

    d.f_bb.resize(k_total);
    d.w_bb.resize(k_total);
    for (std::size_t k = 0; k < k_total; ++k) {
        const CMatrix &frf = mode == AnalogMode::unified ? d.f_rf : d.f_rf_k[k];
        const CMatrix &wrf = mode == AnalogMode::unified ? d.w_rf : d.w_rf_k[k];
        CMatrix heq = equivalent_channel(wrf, csi.per_subcarrier[k].h, frf);
        auto sh = stack_real(heq);
        auto f_re = net_infer(fp.re_dp, sh);
        auto f_im = net_infer(fp.im_dp, sh);
        auto w_re = net_infer(fp.re_dc, sh);
        auto w_im = net_infer(fp.im_dc, sh);
        CMatrix fraw = combine_to_complex(f_re, f_im, cfg.n_t_rf, cfg.n_s);
        d.f_bb[k] = normalize_precoder(frf, fraw, cfg.n_s);
        d.w_bb[k] = combine_to_complex(w_re, w_im, cfg.n_r_rf, cfg.n_s);
    }
    return d;
}

std::vector<BitBlock> framework_transmit(const FrameworkParams &fp, const HybridDesign &design,
                                         const WidebandChannel &true_channel,
                                         const std::vector<BitBlock> &bits,
                                         const std::vector<std::vector<cplx>> &noise,
                                         double power) {
    const SystemConfig &cfg = fp.cfg;
    const std::size_t k_total = true_channel.per_subcarrier.size();
    if (bits.size() != k_total || noise.size() != k_total)
        throw std::invalid_argument("framework_transmit: per-subcarrier input count mismatch");
    std::vector<BitBlock> out(k_total);
    for (std::size_t k = 0; k < k_total; ++k) {
        auto x = modulate(bits[k], cfg.m_order);
        auto r = transmit_receive(true_channel.per_subcarrier[k].h, design.weights(k), x, noise[k],
                                  power);
        std::vector<double> sr(2 * cfg.n_s);
        for (std::size_t i = 0; i < cfg.n_s; ++i) {
            sr[i] = r[i].real();
            sr[cfg.n_s + i] = r[i].imag();
        }
        auto probs = net_infer(fp.demod, sr);
        BitBlock rec;
        rec.n_s = cfg.n_s;
        rec.bits_per_symbol = cfg.bits_per_symbol();
        rec.bits.resize(rec.n_s * rec.bits_per_symbol);
        for (std::size_t i = 0; i < rec.bits.size(); ++i)
            rec.bits[i] = probs[i] >= 0.5 ? 1 : 0;
        out[k] = std::move(rec);
    }
    return out;
}

// ---------- checkpoints ----------

namespace {
void put_u32(std::ostream &os, std::uint32_t v) { os.write(reinterpret_cast<const char *>(&v), 4); }
void put_u64(std::ostream &os, std::uint64_t v) { os.write(reinterpret_cast<const char *>(&v), 8); }
std::uint32_t get_u32(std::istream &is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char *>(&v), 4);
    return v;
}
std::uint64_t get_u64(std::istream &is) {
    std::uint64_t v = 0;
    is.read(reinterpret_cast<char *>(&v), 8);
    return v;
}
} // namespace

std::uint64_t fnv1a64(const std::string &text) {
    std::uint64_t h = 14695981039346656037ULL;
    for (unsigned char c : text) {
        h ^= c;
        h *= 1099511628211ULL;
    }
    return h;
}

void save_checkpoint(const std::string &path, const FrameworkParams &fp, const std::string &rng_id,
                     std::uint64_t config_digest) {
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os)
        throw std::runtime_error("cannot open checkpoint for writing: " + path);
    os.write("JHPFCKP1", 8);
    put_u32(os, 1u);
    const SystemConfig &c = fp.cfg;
    for (std::size_t v : {c.n_t, c.n_r, c.n_t_rf, c.n_r_rf, c.n_s, c.m_order, c.k_subcarriers,
                          c.anchor_subcarrier_q})
        put_u32(os, static_cast<std::uint32_t>(v));
    put_u32(os, static_cast<std::uint32_t>(fp.phase_activation));
    put_u32(os, static_cast<std::uint32_t>(rng_id.size()));
    os.write(rng_id.data(), static_cast<std::streamsize>(rng_id.size()));
    put_u64(os, config_digest);
    const_cast<FrameworkParams &>(fp).for_each_net(
        [&](NetParams &n) { write_net(os, n); });
    if (!os)
        throw std::runtime_error("checkpoint write failed: " + path);
}

FrameworkParams load_checkpoint(const std::string &path, std::string *rng_id,
                                std::uint64_t *config_digest) {
    std::ifstream is(path, std::ios::binary);
    if (!is)
        throw std::runtime_error("cannot open checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (!is || std::memcmp(magic, "JHPFCKP1", 8) != 0)
        throw std::runtime_error("bad checkpoint magic: " + path);
    std::uint32_t version = get_u32(is);
    if (version != 1u)
        throw std::runtime_error("unsupported checkpoint version");
    FrameworkParams fp;
    fp.cfg.n_t = get_u32(is);
    fp.cfg.n_r = get_u32(is);
    fp.cfg.n_t_rf = get_u32(is);
    fp.cfg.n_r_rf = get_u32(is);
    fp.cfg.n_s = get_u32(is);
    fp.cfg.m_order = get_u32(is);
    fp.cfg.k_subcarriers = get_u32(is);
    fp.cfg.anchor_subcarrier_q = get_u32(is);
    fp.phase_activation = static_cast<Act>(get_u32(is));
    std::uint32_t idlen = get_u32(is);
    std::string id(idlen, '\0');
    is.read(id.data(), idlen);
    if (rng_id)
        *rng_id = id;
    std::uint64_t digest = get_u64(is);
    if (config_digest)
        *config_digest = digest;
    fp.for_each_net([&](NetParams &n) { n = read_net(is); });
    if (!is)
        throw std::runtime_error("checkpoint truncated: " + path);
    fp.cfg.validate();
    return fp;
}

} // namespace jhpf
