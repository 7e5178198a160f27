#include "jhpf/svd.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace jhpf {

namespace {

// One-sided Jacobi for rows >= cols: rotate column pairs of W (and V) until
// all columns are mutually orthogonal, then read off S and U.
SvdResult jacobi_tall(const CMatrix &a) {
    const std::size_t m = a.rows(), n = a.cols();
    CMatrix w = a;
    CMatrix v = CMatrix::identity(n);

    constexpr double kTol = 1e-14;
    constexpr int kMaxSweeps = 64;

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        bool rotated = false;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                double alpha = 0.0, beta = 0.0;
                cplx gamma = 0.0;
                for (std::size_t i = 0; i < m; ++i) {
                    alpha += std::norm(w(i, p));
                    beta += std::norm(w(i, q));
                    gamma += std::conj(w(i, p)) * w(i, q);
                }
                double g = std::abs(gamma);
                if (g <= kTol * std::sqrt(alpha * beta) || g == 0.0)
                    continue;
                rotated = true;

                // phase-align column q, then a real Jacobi rotation on the
                // 2x2 Gram block [[alpha, g], [g, beta]]
                cplx phase = gamma / g; // e^{j arg gamma}
                double tau = (beta - alpha) / (2.0 * g);
                double t = (tau >= 0.0 ? 1.0 : -1.0) / (std::abs(tau) + std::sqrt(1.0 + tau * tau));
                double c = 1.0 / std::sqrt(1.0 + t * t);
                double s = c * t;
                cplx pc = std::conj(phase);

                for (std::size_t i = 0; i < m; ++i) {
                    cplx wp = w(i, p), wq = w(i, q);
                    w(i, p) = c * wp - s * pc * wq;
                    w(i, q) = s * wp + c * pc * wq;
                }
                for (std::size_t i = 0; i < n; ++i) {
                    cplx vp = v(i, p), vq = v(i, q);
                    v(i, p) = c * vp - s * pc * vq;
                    v(i, q) = s * vp + c * pc * vq;
                }
            }
        }
        if (!rotated)
            break;
    }

    std::vector<double> sv(n);
    for (std::size_t j = 0; j < n; ++j) {
        double nrm = 0.0;
        for (std::size_t i = 0; i < m; ++i)
            nrm += std::norm(w(i, j));
        sv[j] = std::sqrt(nrm);
    }

    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) { return sv[i] > sv[j]; });

    SvdResult r;
    r.u = CMatrix(m, n);
    r.v = CMatrix(n, n);
    r.s.resize(n);
    for (std::size_t jj = 0; jj < n; ++jj) {
        std::size_t j = order[jj];
        r.s[jj] = sv[j];
        for (std::size_t i = 0; i < n; ++i)
            r.v(i, jj) = v(i, j);
        if (sv[j] > 0.0) {
            for (std::size_t i = 0; i < m; ++i)
                r.u(i, jj) = w(i, j) / sv[j];
        }
    }

    // complete any zero-norm U columns to an orthonormal set
    for (std::size_t jj = 0; jj < n; ++jj) {
        if (r.s[jj] > 0.0)
            continue;
        for (std::size_t e = 0; e < m; ++e) {
            std::vector<cplx> cand(m, 0.0);
            cand[e] = 1.0;
            for (std::size_t k = 0; k < n; ++k) {
                if (k == jj || (r.s[k] == 0.0 && k > jj))
                    continue; // only orthogonalize against columns already filled
                cplx proj = 0.0;
                for (std::size_t i = 0; i < m; ++i)
                    proj += std::conj(r.u(i, k)) * cand[i];
                for (std::size_t i = 0; i < m; ++i)
                    cand[i] -= proj * r.u(i, k);
            }
            double nrm = 0.0;
            for (std::size_t i = 0; i < m; ++i)
                nrm += std::norm(cand[i]);
            if (nrm > 1e-8) {
                nrm = std::sqrt(nrm);
                for (std::size_t i = 0; i < m; ++i)
                    r.u(i, jj) = cand[i] / nrm;
                break;
            }
        }
    }
    return r;
}

} // namespace

SvdResult svd_compact(const CMatrix &a) {
    if (a.empty())
        throw std::invalid_argument("svd_compact: empty matrix");
    if (a.rows() >= a.cols())
        return jacobi_tall(a);
    SvdResult rt = jacobi_tall(a.hermitian());
    SvdResult r;
    r.u = rt.v;
    r.v = rt.u;
    r.s = rt.s;
    return r;
}

} // namespace jhpf
