#ifndef JHPF_PHY_HPP
#define JHPF_PHY_HPP

#include "jhpf/cmatrix.hpp"
#include "jhpf/rng.hpp"

#include <vector>

namespace jhpf {

/// N_s x log2(M) bit matrix, row-major, entries 0/1.
struct BitBlock {
    std::size_t n_s = 0, bits_per_symbol = 0;
    std::vector<std::uint8_t> bits;

    std::uint8_t &at(std::size_t stream, std::size_t j) { return bits[stream * bits_per_symbol + j]; }
    std::uint8_t at(std::size_t stream, std::size_t j) const { return bits[stream * bits_per_symbol + j]; }
    std::size_t total() const { return bits.size(); }
    bool operator==(const BitBlock &) const = default;
};

BitBlock random_bits(RngStream &stream, std::size_t n_s, std::size_t m_order);

/// Transmit/receive processing matrices of the hybrid architecture.
struct HybridWeights {
    CMatrix f_rf; // n_t x n_t_rf, entries of modulus 1/sqrt(n_t)
    CMatrix f_bb; // n_t_rf x n_s, normalized so ||f_rf f_bb||_F^2 = n_s
    CMatrix w_rf; // n_r x n_r_rf, entries of modulus 1/sqrt(n_r)
    CMatrix w_bb; // n_r_rf x n_s
};

/// Largest deviation from the constant-modulus constraint over all entries.
double analog_modulus_error(const CMatrix &rf);

/// | ||f_rf f_bb||_F^2 - n_s |
double power_constraint_error(const HybridWeights &w, std::size_t n_s);

/// Gray-mapped QPSK, unit total symbol energy: bit pair (b0,b1) maps to
/// ((1-2 b0) + j (1-2 b1)) / sqrt(2 n_s). Only m_order = 4 is supported.
std::vector<cplx> modulate(const BitBlock &bits, std::size_t m_order);

/// Sign decisions inverting the QPSK mapping; exact zeros decide bit 0.
BitBlock demod_hard(const std::vector<cplx> &x_hat, std::size_t m_order);

/// r = sqrt(P) W_BB^H W_RF^H H F_RF F_BB x + W_BB^H W_RF^H n
std::vector<cplx> transmit_receive(const CMatrix &h, const HybridWeights &w,
                                   const std::vector<cplx> &x, const std::vector<cplx> &noise,
                                   double power);

/// P = 10^(snr_db/10); noise variance is fixed at 1 throughout.
double snr_to_power(double snr_db);

} // namespace jhpf

#endif
