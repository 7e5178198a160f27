#include "jhpf/neural.hpp"
#include "jhpf/kernels.hpp"

#include <cmath>
#include <istream>
#include <ostream>
#include <stdexcept>

namespace jhpf {

namespace {
constexpr double kPi = 3.14159265358979323846;
} // namespace

double act_apply(Act a, double x) {
    switch (a) {
    case Act::relu:
        return x > 0.0 ? x : 0.0;
    case Act::sigmoid:
        return 1.0 / (1.0 + std::exp(-x));
    case Act::tanh_scaled:
        return kPi * std::tanh(x);
    case Act::linear:
        return x;
    }
    return x;
}

// derivative expressed through input x and output y
double act_grad(Act a, double x, double y) {
    switch (a) {
    case Act::relu:
        return x > 0.0 ? 1.0 : 0.0;
    case Act::sigmoid:
        return y * (1.0 - y);
    case Act::tanh_scaled:
        return kPi - y * y / kPi;
    case Act::linear:
        return 1.0;
    }
    return 1.0;
}

void MlpSpec::validate() const {
    if (layer_sizes.size() < 2)
        throw std::invalid_argument("mlp spec: need at least input and output sizes");
    for (std::size_t s : layer_sizes)
        if (s == 0)
            throw std::invalid_argument("mlp spec: zero-sized layer");
}

void NetParams::init(const MlpSpec &s, RngStream &stream) {
    s.validate();
    spec = s;
    dense.clear();
    bn.clear();
    const std::size_t n = s.n_dense();
    for (std::size_t l = 0; l < n; ++l) {
        DenseLayer d;
        d.in = s.layer_sizes[l];
        d.out = s.layer_sizes[l + 1];
        d.w.resize(d.in * d.out);
        d.b.assign(d.out, 0.0);
        Act act = (l + 1 < n) ? s.hidden_activation : s.output_activation;
        double limit = act == Act::relu
                           ? std::sqrt(6.0 / static_cast<double>(d.in))
                           : std::sqrt(6.0 / static_cast<double>(d.in + d.out));
        for (auto &x : d.w)
            x = stream.uniform(-limit, limit);
        dense.push_back(std::move(d));
        if (s.batch_norm_after_hidden && l + 1 < n) {
            BnLayer lb;
            lb.gamma.assign(d.out, 1.0);
            lb.beta.assign(d.out, 0.0);
            lb.run_mean.assign(d.out, 0.0);
            lb.run_var.assign(d.out, 1.0);
            bn.push_back(std::move(lb));
        }
    }
}

NetGrads NetGrads::like(const NetParams &p) {
    NetGrads g;
    for (const auto &d : p.dense)
        g.dense.push_back({Tensor(d.w.size(), 0.0), Tensor(d.b.size(), 0.0)});
    for (const auto &lb : p.bn)
        g.bn.push_back({Tensor(lb.gamma.size(), 0.0), Tensor(lb.beta.size(), 0.0)});
    return g;
}

void NetGrads::zero() {
    for (auto &d : dense) {
        std::fill(d.w.begin(), d.w.end(), 0.0);
        std::fill(d.b.begin(), d.b.end(), 0.0);
    }
    for (auto &lb : bn) {
        std::fill(lb.gamma.begin(), lb.gamma.end(), 0.0);
        std::fill(lb.beta.begin(), lb.beta.end(), 0.0);
    }
}

CMatrix CBatch::matrix(std::size_t b) const {
    CMatrix m(rows, cols);
    const cplx *src = sample(b);
    for (std::size_t k = 0; k < rows * cols; ++k)
        m.data()[k] = src[k];
    return m;
}

void CBatch::set_matrix(std::size_t b, const CMatrix &m) {
    if (m.rows() != rows || m.cols() != cols)
        throw std::invalid_argument("CBatch::set_matrix: shape mismatch");
    cplx *dst = sample(b);
    for (std::size_t k = 0; k < rows * cols; ++k)
        dst[k] = m.data()[k];
}

// ---------- tape ----------

RId Tape::new_real(std::size_t rows, std::size_t cols) {
    rvals_.emplace_back(rows, cols);
    rgrads_.emplace_back(rows, cols);
    return RId{static_cast<int>(rvals_.size() - 1)};
}

CId Tape::new_cplx(std::size_t batch, std::size_t rows, std::size_t cols) {
    cvals_.emplace_back(batch, rows, cols);
    cgrads_.emplace_back(batch, rows, cols);
    return CId{static_cast<int>(cvals_.size() - 1)};
}

void Tape::run_forward() {
    loss = 0.0;
    for (auto &n : nodes_)
        n->forward(*this);
    ran_once_ = true;
}

void Tape::zero_grads() {
    for (auto &g : rgrads_)
        std::fill(g.v.begin(), g.v.end(), 0.0);
    for (auto &g : cgrads_)
        std::fill(g.v.begin(), g.v.end(), cplx(0.0, 0.0));
}

void Tape::sweep_backward() {
    for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it)
        (*it)->backward(*this);
}

// ---------- neural nodes ----------

namespace {

struct DenseNode final : TapeNode {
    const DenseLayer *p;
    DenseGrads *g;
    RId in, out;

    DenseNode(const DenseLayer *p_, DenseGrads *g_, RId i, RId o) : p(p_), g(g_), in(i), out(o) {}

    void forward(Tape &t) override {
        const RBatch &x = t.rv(in);
        RBatch &y = t.rv(out);
        kernels::dense_forward(x.v.data(), p->w.data(), p->b.data(), y.v.data(), x.rows, p->in,
                               p->out);
    }
    void backward(Tape &t) override {
        const RBatch &x = t.rv(in);
        const RBatch &dy = t.rg(out);
        if (g)
            kernels::dense_backward_params(x.v.data(), dy.v.data(), g->w.data(), g->b.data(),
                                           x.rows, p->in, p->out);
        kernels::dense_backward_input(dy.v.data(), p->w.data(), t.rg(in).v.data(), x.rows, p->in,
                                      p->out);
    }
};

struct BatchNormNode final : TapeNode {
    BnLayer *p; // mutable: running statistics update on first train pass
    BnGrads *g;
    RId in, out;
    Mode mode;
    Tensor mean, var; // batch statistics saved for the backward sweep

    BatchNormNode(BnLayer *p_, BnGrads *g_, RId i, RId o, Mode m)
        : p(p_), g(g_), in(i), out(o), mode(m) {}

    void forward(Tape &t) override {
        const RBatch &x = t.rv(in);
        RBatch &y = t.rv(out);
        const std::size_t nb = x.rows, nf = x.cols;
        if (mode == Mode::train) {
            mean.assign(nf, 0.0);
            var.assign(nf, 0.0);
            for (std::size_t f = 0; f < nf; ++f) {
                double m = 0.0;
                for (std::size_t b = 0; b < nb; ++b)
                    m += x.at(b, f);
                m /= static_cast<double>(nb);
                double v2 = 0.0;
                for (std::size_t b = 0; b < nb; ++b) {
                    double d = x.at(b, f) - m;
                    v2 += d * d;
                }
                v2 /= static_cast<double>(nb);
                mean[f] = m;
                var[f] = v2;
                double s = 1.0 / std::sqrt(v2 + kBnEps);
                for (std::size_t b = 0; b < nb; ++b)
                    y.at(b, f) = p->gamma[f] * (x.at(b, f) - m) * s + p->beta[f];
            }
            if (!t.replaying()) {
                for (std::size_t f = 0; f < nf; ++f) {
                    p->run_mean[f] = kBnMomentum * p->run_mean[f] + (1.0 - kBnMomentum) * mean[f];
                    p->run_var[f] = kBnMomentum * p->run_var[f] + (1.0 - kBnMomentum) * var[f];
                }
            }
        } else {
            for (std::size_t f = 0; f < nf; ++f) {
                double s = 1.0 / std::sqrt(p->run_var[f] + kBnEps);
                for (std::size_t b = 0; b < nb; ++b)
                    y.at(b, f) = p->gamma[f] * (x.at(b, f) - p->run_mean[f]) * s + p->beta[f];
            }
        }
    }

    void backward(Tape &t) override {
        const RBatch &x = t.rv(in);
        const RBatch &dy = t.rg(out);
        RBatch &dx = t.rg(in);
        const std::size_t nb = x.rows, nf = x.cols;
        if (mode == Mode::train) {
            for (std::size_t f = 0; f < nf; ++f) {
                double s = 1.0 / std::sqrt(var[f] + kBnEps);
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t b = 0; b < nb; ++b) {
                    double xhat = (x.at(b, f) - mean[f]) * s;
                    sum_dy += dy.at(b, f);
                    sum_dy_xhat += dy.at(b, f) * xhat;
                }
                if (g) {
                    g->beta[f] += sum_dy;
                    g->gamma[f] += sum_dy_xhat;
                }
                double inv_b = 1.0 / static_cast<double>(nb);
                for (std::size_t b = 0; b < nb; ++b) {
                    double xhat = (x.at(b, f) - mean[f]) * s;
                    dx.at(b, f) += p->gamma[f] * s *
                                   (dy.at(b, f) - inv_b * sum_dy - xhat * inv_b * sum_dy_xhat);
                }
            }
        } else {
            for (std::size_t f = 0; f < nf; ++f) {
                double s = 1.0 / std::sqrt(p->run_var[f] + kBnEps);
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (std::size_t b = 0; b < nb; ++b) {
                    double xhat = (x.at(b, f) - p->run_mean[f]) * s;
                    sum_dy += dy.at(b, f);
                    sum_dy_xhat += dy.at(b, f) * xhat;
                    dx.at(b, f) += p->gamma[f] * s * dy.at(b, f);
                }
                if (g) {
                    g->beta[f] += sum_dy;
                    g->gamma[f] += sum_dy_xhat;
                }
            }
        }
    }
};

struct ActNode final : TapeNode {
    Act act;
    RId in, out;

    ActNode(Act a, RId i, RId o) : act(a), in(i), out(o) {}

    void forward(Tape &t) override {
        const RBatch &x = t.rv(in);
        RBatch &y = t.rv(out);
        for (std::size_t k = 0; k < x.v.size(); ++k)
            y.v[k] = act_apply(act, x.v[k]);
    }
    void backward(Tape &t) override {
        const RBatch &x = t.rv(in);
        const RBatch &y = t.rv(out);
        const RBatch &dy = t.rg(out);
        RBatch &dx = t.rg(in);
        for (std::size_t k = 0; k < x.v.size(); ++k)
            dx.v[k] += dy.v[k] * act_grad(act, x.v[k], y.v[k]);
    }
};

} // namespace

struct BceNode final : TapeNode {
    RId probs;
    RBatch targets;

    BceNode(RId p, RBatch t) : probs(p), targets(std::move(t)) {}

    void forward(Tape &t) override {
        const RBatch &p = t.rv(probs);
        if (p.rows != targets.rows || p.cols != targets.cols)
            throw std::invalid_argument("bce: probability/target shape mismatch");
        t.loss = bce_loss(targets, p);
    }
    void backward(Tape &t) override {
        const RBatch &p = t.rv(probs);
        RBatch &dp = t.rg(probs);
        double inv_b = 1.0 / static_cast<double>(p.rows);
        for (std::size_t k = 0; k < p.v.size(); ++k) {
            double pc = std::min(std::max(p.v[k], kBceClamp), 1.0 - kBceClamp);
            if (p.v[k] != pc)
                continue; // clamped entry: flat
            double tgt = targets.v[k];
            dp.v[k] += -inv_b * (tgt / pc - (1.0 - tgt) / (1.0 - pc));
        }
    }
};

double bce_loss(const RBatch &targets, const RBatch &probs) {
    if (probs.rows != targets.rows || probs.cols != targets.cols)
        throw std::invalid_argument("bce_loss: shape mismatch");
    if (probs.rows == 0)
        throw std::invalid_argument("bce_loss: empty batch");
    double acc = 0.0;
    for (std::size_t k = 0; k < probs.v.size(); ++k) {
        double p = std::min(std::max(probs.v[k], kBceClamp), 1.0 - kBceClamp);
        double t = targets.v[k];
        acc += t * std::log(p) + (1.0 - t) * std::log(1.0 - p);
    }
    return -acc / static_cast<double>(probs.rows);
}

RId append_mlp(Tape &t, NetParams &params, NetGrads *grads, RId input) {
    const MlpSpec &spec = params.spec;
    spec.validate();
    if (t.rv(input).cols != spec.input_size())
        throw std::invalid_argument("append_mlp: input width does not match the spec");
    const std::size_t batch = t.rv(input).rows;
    const std::size_t n = spec.n_dense();
    RId cur = input;
    std::size_t bn_idx = 0;
    for (std::size_t l = 0; l < n; ++l) {
        DenseLayer &d = params.dense[l];
        RId lin = t.new_real(batch, d.out);
        t.emplace<DenseNode>(&d, grads ? &grads->dense[l] : nullptr, cur, lin);
        cur = lin;
        bool hidden = l + 1 < n;
        if (hidden && spec.batch_norm_after_hidden) {
            RId bno = t.new_real(batch, d.out);
            t.emplace<BatchNormNode>(&params.bn[bn_idx], grads ? &grads->bn[bn_idx] : nullptr, cur,
                                     bno, params.mode);
            ++bn_idx;
            cur = bno;
        }
        Act act = hidden ? spec.hidden_activation : spec.output_activation;
        if (act != Act::linear) {
            RId ao = t.new_real(batch, d.out);
            t.emplace<ActNode>(act, cur, ao);
            cur = ao;
        }
    }
    return cur;
}

BceNode *append_bce(Tape &t, RId probs, RBatch targets) {
    return t.emplace<BceNode>(probs, std::move(targets));
}

std::vector<double> mlp_forward(NetParams &params, const std::vector<double> &input, Tape &tape,
                                RId *out_id, RId *in_id) {
    RId in = tape.new_real(1, input.size());
    std::copy(input.begin(), input.end(), tape.rv(in).v.begin());
    RId out = append_mlp(tape, params, nullptr, in);
    tape.run_forward();
    if (out_id)
        *out_id = out;
    if (in_id)
        *in_id = in;
    return tape.rv(out).v;
}

// ---------- Adam ----------

namespace {
constexpr double kAdamBeta1 = 0.9;
constexpr double kAdamBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
} // namespace

AdamState AdamState::like(NetParams &p) {
    AdamState s;
    p.for_each_tensor([&](Tensor &t) { s.slots.push_back({Tensor(t.size(), 0.0), Tensor(t.size(), 0.0)}); });
    return s;
}

void adam_advance(AdamState &state) { ++state.t; }

void adam_update_tensor(Tensor &param, const Tensor &grad, AdamState::Slot &slot, std::uint64_t t,
                        double lr) {
    double bc1 = 1.0 - std::pow(kAdamBeta1, static_cast<double>(t));
    double bc2 = 1.0 - std::pow(kAdamBeta2, static_cast<double>(t));
    for (std::size_t i = 0; i < param.size(); ++i) {
        double g = grad[i];
        slot.m[i] = kAdamBeta1 * slot.m[i] + (1.0 - kAdamBeta1) * g;
        slot.v[i] = kAdamBeta2 * slot.v[i] + (1.0 - kAdamBeta2) * g * g;
        double mhat = slot.m[i] / bc1;
        double vhat = slot.v[i] / bc2;
        param[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
    }
}

void adam_step(NetParams &params, NetGrads &grads, AdamState &state, double lr) {
    adam_advance(state);
    std::size_t slot = 0;
    // walk params and grads in the same declaration order
    std::vector<Tensor *> gts;
    grads.for_each_tensor([&](Tensor &t) { gts.push_back(&t); });
    params.for_each_tensor([&](Tensor &t) {
        adam_update_tensor(t, *gts[slot], state.slots[slot], state.t, lr);
        ++slot;
    });
}

// ---------- serialization ----------

namespace {
void put_u32(std::ostream &os, std::uint32_t v) { os.write(reinterpret_cast<const char *>(&v), 4); }
std::uint32_t get_u32(std::istream &is) {
    std::uint32_t v = 0;
    is.read(reinterpret_cast<char *>(&v), 4);
    return v;
}
void put_tensor(std::ostream &os, const Tensor &t) {
    os.write(reinterpret_cast<const char *>(t.data()), static_cast<std::streamsize>(t.size() * 8));
}
void get_tensor(std::istream &is, Tensor &t) {
    is.read(reinterpret_cast<char *>(t.data()), static_cast<std::streamsize>(t.size() * 8));
}
} // namespace

void write_net(std::ostream &os, const NetParams &p) {
    put_u32(os, static_cast<std::uint32_t>(p.spec.layer_sizes.size()));
    for (std::size_t s : p.spec.layer_sizes)
        put_u32(os, static_cast<std::uint32_t>(s));
    put_u32(os, static_cast<std::uint32_t>(p.spec.hidden_activation));
    put_u32(os, static_cast<std::uint32_t>(p.spec.output_activation));
    put_u32(os, p.spec.batch_norm_after_hidden ? 1u : 0u);
    for (const auto &d : p.dense) {
        put_tensor(os, d.w);
        put_tensor(os, d.b);
    }
    for (const auto &lb : p.bn) {
        put_tensor(os, lb.gamma);
        put_tensor(os, lb.beta);
        put_tensor(os, lb.run_mean);
        put_tensor(os, lb.run_var);
    }
}

NetParams read_net(std::istream &is) {
    MlpSpec spec;
    std::uint32_t n = get_u32(is);
    spec.layer_sizes.resize(n);
    for (auto &s : spec.layer_sizes)
        s = get_u32(is);
    spec.hidden_activation = static_cast<Act>(get_u32(is));
    spec.output_activation = static_cast<Act>(get_u32(is));
    spec.batch_norm_after_hidden = get_u32(is) != 0;
    spec.validate();

    NetParams p;
    RngStream dummy(0, 0);
    p.init(spec, dummy); // allocates the right shapes; values overwritten below
    for (auto &d : p.dense) {
        get_tensor(is, d.w);
        get_tensor(is, d.b);
    }
    for (auto &lb : p.bn) {
        get_tensor(is, lb.gamma);
        get_tensor(is, lb.beta);
        get_tensor(is, lb.run_mean);
        get_tensor(is, lb.run_var);
    }
    p.mode = Mode::infer;
    if (!is)
        throw std::runtime_error("read_net: truncated stream");
    return p;
}

} // namespace jhpf
