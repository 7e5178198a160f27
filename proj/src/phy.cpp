#include "jhpf/phy.hpp"

#include <cmath>
#include <stdexcept>

namespace jhpf {

BitBlock random_bits(RngStream &stream, std::size_t n_s, std::size_t m_order) {
    if (m_order != 4)
        throw std::invalid_argument("random_bits: only QPSK (m_order = 4) is supported");
    BitBlock b;
    b.n_s = n_s;
    b.bits_per_symbol = 2;
    b.bits.resize(n_s * 2);
    for (auto &bit : b.bits)
        bit = static_cast<std::uint8_t>(stream.next_u32() & 1u);
    return b;
}

double analog_modulus_error(const CMatrix &rf) {
    double target = 1.0 / std::sqrt(static_cast<double>(rf.rows()));
    double worst = 0.0;
    for (std::size_t i = 0; i < rf.rows(); ++i)
        for (std::size_t j = 0; j < rf.cols(); ++j)
            worst = std::max(worst, std::abs(std::abs(rf(i, j)) - target));
    return worst;
}

double power_constraint_error(const HybridWeights &w, std::size_t n_s) {
    double nf = frob_norm(matmul(w.f_rf, w.f_bb));
    return std::abs(nf * nf - static_cast<double>(n_s));
}

std::vector<cplx> modulate(const BitBlock &bits, std::size_t m_order) {
    if (m_order != 4)
        throw std::invalid_argument("modulate: only QPSK (m_order = 4) is supported");
    if (bits.bits_per_symbol != 2)
        throw std::invalid_argument("modulate: bit block must have log2(4) = 2 columns");
    double amp = 1.0 / std::sqrt(2.0 * static_cast<double>(bits.n_s));
    std::vector<cplx> x(bits.n_s);
    for (std::size_t i = 0; i < bits.n_s; ++i) {
        double re = bits.at(i, 0) ? -amp : amp;
        double im = bits.at(i, 1) ? -amp : amp;
        x[i] = cplx(re, im);
    }
    return x;
}

BitBlock demod_hard(const std::vector<cplx> &x_hat, std::size_t m_order) {
    if (m_order != 4)
        throw std::invalid_argument("demod_hard: only QPSK (m_order = 4) is supported");
    BitBlock b;
    b.n_s = x_hat.size();
    b.bits_per_symbol = 2;
    b.bits.resize(b.n_s * 2);
    for (std::size_t i = 0; i < b.n_s; ++i) {
        b.at(i, 0) = x_hat[i].real() < 0.0 ? 1 : 0;
        b.at(i, 1) = x_hat[i].imag() < 0.0 ? 1 : 0;
    }
    return b;
}

std::vector<cplx> transmit_receive(const CMatrix &h, const HybridWeights &w,
                                   const std::vector<cplx> &x, const std::vector<cplx> &noise,
                                   double power) {
    const std::size_t n_t = w.f_rf.rows(), n_r = w.w_rf.rows(), n_s = w.f_bb.cols();
    if (h.rows() != n_r || h.cols() != n_t || x.size() != n_s || noise.size() != n_r ||
        w.f_bb.rows() != w.f_rf.cols() || w.w_bb.rows() != w.w_rf.cols() || w.w_bb.cols() != n_s)
        throw std::invalid_argument("transmit_receive: dimension mismatch");

    std::vector<cplx> s = matvec(w.f_bb, x);
    s = matvec(w.f_rf, s);
    std::vector<cplx> y = matvec(h, s);
    double sp = std::sqrt(power);
    for (std::size_t i = 0; i < n_r; ++i)
        y[i] = sp * y[i] + noise[i];
    std::vector<cplx> z = matvec(w.w_rf.hermitian(), y);
    return matvec(w.w_bb.hermitian(), z);
}

double snr_to_power(double snr_db) { return std::pow(10.0, snr_db / 10.0); }

} // namespace jhpf
