#ifndef JHPF_FRAMEWORK_HPP
#define JHPF_FRAMEWORK_HPP

#include "jhpf/channel.hpp"
#include "jhpf/neural.hpp"
#include "jhpf/phy.hpp"

#include <memory>
#include <string>
#include <vector>

namespace jhpf {

struct SystemConfig {
    std::size_t n_t = 32, n_r = 16;
    std::size_t n_t_rf = 3, n_r_rf = 3;
    std::size_t n_s = 3;
    std::size_t m_order = 4;
    std::size_t k_subcarriers = 1; // 1 = narrowband
    std::size_t anchor_subcarrier_q = 0;

    void validate() const;
    std::size_t bits_per_symbol() const; // log2(m_order)
    std::size_t bits_per_use() const { return n_s * bits_per_symbol(); }
    bool operator==(const SystemConfig &) const = default;
};

// ---------- framework-specific reshaping and custom operations ----------

/// Row-major real parts followed by row-major imaginary parts.
std::vector<double> stack_real(const CMatrix &a);
CMatrix unstack_real(const std::vector<double> &v, std::size_t rows, std::size_t cols);

/// Unit-power phase-shifter matrix: entry (1/sqrt(n_ant)) exp(j phi), the
/// phase vector filling the matrix column-major.
CMatrix phases_to_analog(const std::vector<double> &phi, std::size_t n_ant, std::size_t n_rf);

/// Column-major vector-to-matrix combine of real and imaginary parts.
CMatrix combine_to_complex(const std::vector<double> &re, const std::vector<double> &im,
                           std::size_t rows, std::size_t cols);

/// H_eq = W_RF^H H F_RF
CMatrix equivalent_channel(const CMatrix &w_rf, const CMatrix &h, const CMatrix &f_rf);

/// F_BB = (sqrt(n_s) / ||F_RF Fbb_raw||_F) Fbb_raw; throws when the
/// composite norm is zero (re-draw the initialization instead of adding a
/// gradient-biasing epsilon).
CMatrix normalize_precoder(const CMatrix &f_rf, const CMatrix &f_bb_raw, std::size_t n_s);

// ---------- parameters ----------

struct FrameworkParams {
    SystemConfig cfg;
    Act phase_activation = Act::relu; // relu | tanh_scaled
    NetParams pp, cp, re_dp, im_dp, re_dc, im_dc, demod;

    void set_mode(Mode m);

    template <typename F> void for_each_net(F &&f) {
        f(pp);
        f(cp);
        f(re_dp);
        f(im_dp);
        f(re_dc);
        f(im_dc);
        f(demod);
    }
};

struct FrameworkGrads {
    NetGrads pp, cp, re_dp, im_dp, re_dc, im_dc, demod;

    static FrameworkGrads like(FrameworkParams &p);
    void zero();

    template <typename F> void for_each_net(F &&f) {
        f(pp);
        f(cp);
        f(re_dp);
        f(im_dp);
        f(re_dc);
        f(im_dc);
        f(demod);
    }
};

/// Network shapes: the reference widths (512/256/128, +64 for the combiner
/// phase net, 20/40/20 digital, 20/50/20 demodulator) scale with each
/// network's input size as max(16, round(width * input_ratio)).
MlpSpec make_pp_spec(const SystemConfig &cfg, Act phase_act);
MlpSpec make_cp_spec(const SystemConfig &cfg, Act phase_act);
MlpSpec make_dp_spec(const SystemConfig &cfg);
MlpSpec make_dc_spec(const SystemConfig &cfg);
MlpSpec make_demod_spec(const SystemConfig &cfg);

/// Build and seed all seven networks; network i draws from (init_seed, i).
FrameworkParams make_framework(const SystemConfig &cfg, Act phase_act, std::uint64_t init_seed);

// ---------- training data ----------

struct TrainingSample {
    CMatrix h_anchor; // design input of the analog stage
    CMatrix h_data;   // transmission channel (equals h_anchor when K = 1)
    std::size_t subcarrier_index = 0;
    BitBlock bits;
    std::vector<cplx> noise; // length n_r, CN(0,1)
};

struct TrainingSet {
    std::vector<TrainingSample> samples;
};

/// Materialize samples from a channel dataset. Bits, noise and the random
/// subcarrier index are derived from the dataset's own RNG identifier
/// (sample i uses stream slots base+4i+1..3), so the set is a deterministic
/// function of the file.
TrainingSet build_training_set(const ChannelDataset &ds, const SystemConfig &cfg);

// ---------- end-to-end differentiable forward ----------

struct ForwardTrace {
    std::unique_ptr<Tape> tape;
    std::size_t batch = 0;
    RId phi_p, phi_c, probs;
    CId unit_p, unit_c, f_rf, w_rf, heq, f_bb_raw, f_bb, w_bb, r;
    CBatch z; // W_RF^H y per sample, cached for closed-form gradient checks
    double loss = 0.0;

    HybridWeights weights(std::size_t b) const;
    const RBatch &probabilities() const { return tape->rv(probs); }
};

/// Record the full pipeline (analog/digital designers, signal flow,
/// demodulator, optionally the BCE loss) for one mini-batch on a fresh tape.
ForwardTrace framework_forward(FrameworkParams &fp, FrameworkGrads *grads,
                               const std::vector<const TrainingSample *> &batch, double power,
                               bool with_loss);

// ---------- training ----------

struct TrainHparams {
    std::size_t epochs = 50;
    double lr_initial = 1e-3;
    double lr_final = 1e-4;
    std::size_t lr_switch_epoch = 500; // first epoch (1-based) using lr_final
    std::size_t batch_size = 256;
    double train_snr_db = 10.0;
    std::uint64_t shuffle_seed = 0;
};

struct EpochStats {
    std::size_t epoch = 0; // 0 = before any update
    double train_bce = 0.0;
    double val_bce = 0.0;
    double val_ber = 0.0;
    double max_modulus_err = 0.0; // constant-modulus deviation over the epoch
    double max_power_err = 0.0;   // ||F_RF F_BB||_F^2 - n_s deviation
};

struct TrainResult {
    FrameworkParams params; // best-validation checkpoint
    std::vector<EpochStats> history;
};

/// Mini-batch Adam on the BCE loss. Throws on divergence (non-finite
/// validation loss). Deterministic for a fixed thread count; integer- and
/// per-output-reduction ordering makes it independent of the thread count.
TrainResult train_framework(FrameworkParams fp, const TrainingSet &train_set,
                            const TrainingSet &val_set, const TrainHparams &hp);

void write_history_csv(const std::string &path, const std::vector<EpochStats> &history);

// ---------- inference ----------

enum class AnalogMode { unified, per_subcarrier };

struct HybridDesign {
    CMatrix f_rf, w_rf;                     // shared across subcarriers (unified)
    std::vector<CMatrix> f_rf_k, w_rf_k;    // per-subcarrier analog (genie mode)
    std::vector<CMatrix> f_bb, w_bb;        // per-subcarrier digital
    AnalogMode mode = AnalogMode::unified;

    HybridWeights weights(std::size_t k) const;
};

/// Run the designer networks on (possibly imperfect) CSI.
HybridDesign design_hybrid(const FrameworkParams &fp, const WidebandChannel &csi,
                           AnalogMode mode = AnalogMode::unified);

/// Per-subcarrier transmission over the true channel followed by the
/// network demodulator with 0.5 thresholding.
std::vector<BitBlock> framework_transmit(const FrameworkParams &fp, const HybridDesign &design,
                                         const WidebandChannel &true_channel,
                                         const std::vector<BitBlock> &bits,
                                         const std::vector<std::vector<cplx>> &noise, double power);

/// Single-vector inference through one network (infer-mode batch norm);
/// bit-exact against the tape's infer-mode forward.
std::vector<double> net_infer(const NetParams &p, const std::vector<double> &input);

// ---------- checkpoints ----------

// "JHPFCKP1" magic, version, system config, phase activation, RNG identifier,
// training-config digest, then all seven networks' tensors in declaration
// order as little-endian f64.

void save_checkpoint(const std::string &path, const FrameworkParams &fp, const std::string &rng_id,
                     std::uint64_t config_digest);
FrameworkParams load_checkpoint(const std::string &path, std::string *rng_id = nullptr,
                                std::uint64_t *config_digest = nullptr);

std::uint64_t fnv1a64(const std::string &text);

} // namespace jhpf

#endif
