#ifndef JHPF_NEURAL_HPP
#define JHPF_NEURAL_HPP

#include "jhpf/cmatrix.hpp"
#include "jhpf/rng.hpp"

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <string>
#include <vector>

namespace jhpf {

using Tensor = std::vector<double>;

enum class Act : std::uint8_t { relu = 0, sigmoid = 1, linear = 2, tanh_scaled = 3 };
enum class Mode : std::uint8_t { train = 0, infer = 1 };

/// Fully-connected network shape: affine -> batch norm -> activation per
/// hidden layer, affine -> output activation on the last layer.
struct MlpSpec {
    std::vector<std::size_t> layer_sizes;
    Act hidden_activation = Act::relu;
    Act output_activation = Act::linear;
    bool batch_norm_after_hidden = true;

    void validate() const;
    std::size_t input_size() const { return layer_sizes.front(); }
    std::size_t output_size() const { return layer_sizes.back(); }
    std::size_t n_dense() const { return layer_sizes.size() - 1; }
    bool operator==(const MlpSpec &) const = default;
};

struct DenseLayer {
    std::size_t in = 0, out = 0;
    Tensor w; // out x in, row-major
    Tensor b; // out
};

struct BnLayer {
    Tensor gamma, beta, run_mean, run_var;
};

struct NetParams {
    MlpSpec spec;
    std::vector<DenseLayer> dense;
    std::vector<BnLayer> bn; // one per hidden dense layer when enabled
    Mode mode = Mode::train;

    /// Allocate and seed: He-uniform fan-in for ReLU-activated layers,
    /// Glorot-uniform otherwise, zero biases, identity batch norm.
    void init(const MlpSpec &s, RngStream &stream);

    template <typename F> void for_each_tensor(F &&f) {
        for (auto &d : dense) {
            f(d.w);
            f(d.b);
        }
        for (auto &lb : bn) {
            f(lb.gamma);
            f(lb.beta);
        }
    }
};

struct DenseGrads {
    Tensor w, b;
};
struct BnGrads {
    Tensor gamma, beta;
};

struct NetGrads {
    std::vector<DenseGrads> dense;
    std::vector<BnGrads> bn;

    static NetGrads like(const NetParams &p);
    void zero();

    template <typename F> void for_each_tensor(F &&f) {
        for (auto &d : dense) {
            f(d.w);
            f(d.b);
        }
        for (auto &lb : bn) {
            f(lb.gamma);
            f(lb.beta);
        }
    }
};

// ---------- reverse-mode tape ----------

/// Batch of real row vectors, row-major.
struct RBatch {
    std::size_t rows = 0, cols = 0;
    std::vector<double> v;

    RBatch() = default;
    RBatch(std::size_t r, std::size_t c) : rows(r), cols(c), v(r * c, 0.0) {}
    double &at(std::size_t r, std::size_t c) { return v[r * cols + c]; }
    double at(std::size_t r, std::size_t c) const { return v[r * cols + c]; }
    double *row(std::size_t r) { return v.data() + r * cols; }
    const double *row(std::size_t r) const { return v.data() + r * cols; }
};

/// Batch of complex rows x cols matrices, one per sample, row-major.
struct CBatch {
    std::size_t batch = 0, rows = 0, cols = 0;
    std::vector<cplx> v;

    CBatch() = default;
    CBatch(std::size_t b, std::size_t r, std::size_t c) : batch(b), rows(r), cols(c), v(b * r * c) {}
    cplx *sample(std::size_t b) { return v.data() + b * rows * cols; }
    const cplx *sample(std::size_t b) const { return v.data() + b * rows * cols; }
    CMatrix matrix(std::size_t b) const;
    void set_matrix(std::size_t b, const CMatrix &m);
};

struct RId {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};
struct CId {
    int idx = -1;
    bool valid() const { return idx >= 0; }
};

class Tape;

struct TapeNode {
    virtual ~TapeNode() = default;
    virtual void forward(Tape &t) = 0;
    virtual void backward(Tape &t) = 0;
};

/// Records the framework's forward computation as an ordered list of nodes
/// over value buffers; the reverse sweep accumulates exact gradients.
/// Re-running forward() replays the recorded computation bit-exactly
/// (running-statistics side effects fire only on the first pass).
class Tape {
  public:
    RId new_real(std::size_t rows, std::size_t cols);
    CId new_cplx(std::size_t batch, std::size_t rows, std::size_t cols);

    RBatch &rv(RId id) { return rvals_[id.idx]; }
    const RBatch &rv(RId id) const { return rvals_[id.idx]; }
    RBatch &rg(RId id) { return rgrads_[id.idx]; }
    CBatch &cv(CId id) { return cvals_[id.idx]; }
    const CBatch &cv(CId id) const { return cvals_[id.idx]; }
    CBatch &cg(CId id) { return cgrads_[id.idx]; }

    template <typename NodeT, typename... Args> NodeT *emplace(Args &&...args) {
        auto node = std::make_unique<NodeT>(std::forward<Args>(args)...);
        NodeT *raw = node.get();
        nodes_.push_back(std::move(node));
        return raw;
    }

    void run_forward();
    void zero_grads();
    void sweep_backward();
    void run_backward() {
        zero_grads();
        sweep_backward();
    }

    bool replaying() const { return ran_once_; }

    double loss = 0.0;

  private:
    std::vector<RBatch> rvals_, rgrads_;
    std::vector<CBatch> cvals_, cgrads_;
    std::vector<std::unique_ptr<TapeNode>> nodes_;
    bool ran_once_ = false;
};

/// Append the network's layers to the tape. Gradients accumulate into
/// *grads during the backward sweep (pass nullptr for frozen parameters).
RId append_mlp(Tape &t, NetParams &params, NetGrads *grads, RId input);

/// Binary cross-entropy of Eq-style batch mean: -(1/B) sum over samples and
/// bits of [t ln p + (1-t) ln(1-p)], probabilities clamped to
/// [1e-7, 1 - 1e-7]. The node seeds the backward sweep by itself.
struct BceNode;
BceNode *append_bce(Tape &t, RId probs, RBatch targets);

// single-vector convenience wrappers used by tests and small tools
std::vector<double> mlp_forward(NetParams &params, const std::vector<double> &input, Tape &tape,
                                RId *out_id = nullptr, RId *in_id = nullptr);

/// Standalone BCE matching append_bce's value (independent of any tape).
double bce_loss(const RBatch &targets, const RBatch &probs);

// ---------- Adam ----------

struct AdamState {
    struct Slot {
        Tensor m, v;
    };
    std::vector<Slot> slots;
    std::uint64_t t = 0;

    static AdamState like(NetParams &p);
};

/// Standard Adam with beta1 = 0.9, beta2 = 0.999, eps = 1e-8 and
/// bias-corrected moments. Tensors update in declaration order.
void adam_step(NetParams &params, NetGrads &grads, AdamState &state, double lr);

/// Raw-tensor version; `state.t` must be advanced once per optimizer step
/// via adam_advance before updating the step's tensors.
void adam_advance(AdamState &state);
void adam_update_tensor(Tensor &param, const Tensor &grad, AdamState::Slot &slot, std::uint64_t t,
                        double lr);

// ---------- serialization ----------

void write_net(std::ostream &os, const NetParams &p);
NetParams read_net(std::istream &is);

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.9;
constexpr double kBceClamp = 1e-7;

double act_apply(Act a, double x);
double act_grad(Act a, double x, double y);

} // namespace jhpf

#endif
