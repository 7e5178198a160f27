#include "jhpf/cmatrix.hpp"

#include <cmath>
#include <stdexcept>

namespace jhpf {

CMatrix CMatrix::identity(std::size_t n) {
    CMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i)
        m(i, i) = 1.0;
    return m;
}

bool CMatrix::all_finite() const {
    for (const auto &z : v_)
        if (!std::isfinite(z.real()) || !std::isfinite(z.imag()))
            return false;
    return true;
}

CMatrix CMatrix::hermitian() const {
    CMatrix m(cols_, rows_);
    for (std::size_t i = 0; i < rows_; ++i)
        for (std::size_t j = 0; j < cols_; ++j)
            m(j, i) = std::conj((*this)(i, j));
    return m;
}

CMatrix CMatrix::scaled(cplx factor) const {
    CMatrix m(rows_, cols_);
    for (std::size_t k = 0; k < v_.size(); ++k)
        m.v_[k] = v_[k] * factor;
    return m;
}

CMatrix matmul(const CMatrix &a, const CMatrix &b) {
    if (a.cols() != b.rows())
        throw std::invalid_argument("matmul: inner dimensions do not match");
    CMatrix c(a.rows(), b.cols());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        for (std::size_t k = 0; k < a.cols(); ++k) {
            cplx aik = a(i, k);
            for (std::size_t j = 0; j < b.cols(); ++j)
                c(i, j) += aik * b(k, j);
        }
    }
    return c;
}

CMatrix operator+(const CMatrix &a, const CMatrix &b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("matrix add: shape mismatch");
    CMatrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            c(i, j) = a(i, j) + b(i, j);
    return c;
}

CMatrix operator-(const CMatrix &a, const CMatrix &b) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw std::invalid_argument("matrix subtract: shape mismatch");
    CMatrix c(a.rows(), a.cols());
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            c(i, j) = a(i, j) - b(i, j);
    return c;
}

std::vector<cplx> column(const CMatrix &a, std::size_t j) {
    std::vector<cplx> v(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i)
        v[i] = a(i, j);
    return v;
}

std::vector<cplx> matvec(const CMatrix &a, const std::vector<cplx> &x) {
    if (a.cols() != x.size())
        throw std::invalid_argument("matvec: dimension mismatch");
    std::vector<cplx> y(a.rows());
    for (std::size_t i = 0; i < a.rows(); ++i) {
        cplx acc = 0.0;
        for (std::size_t j = 0; j < a.cols(); ++j)
            acc += a(i, j) * x[j];
        y[i] = acc;
    }
    return y;
}

double frob_norm(const CMatrix &a) {
    if (a.empty())
        throw std::invalid_argument("frob_norm: empty matrix");
    double s = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            s += std::norm(a(i, j));
    return std::sqrt(s);
}

double max_abs_diff(const CMatrix &a, const CMatrix &b) {
    double m = 0.0;
    for (std::size_t i = 0; i < a.rows(); ++i)
        for (std::size_t j = 0; j < a.cols(); ++j)
            m = std::max(m, std::abs(a(i, j) - b(i, j)));
    return m;
}

} // namespace jhpf
