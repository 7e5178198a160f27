#ifndef JHPF_CMATRIX_HPP
#define JHPF_CMATRIX_HPP

#include <complex>
#include <cstddef>
#include <vector>

namespace jhpf {

using cplx = std::complex<double>;

/// Dense complex matrix, row-major, double precision.
class CMatrix {
  public:
    CMatrix() = default;
    CMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), v_(rows * cols) {}

    static CMatrix identity(std::size_t n);

    std::size_t rows() const { return rows_; }
    std::size_t cols() const { return cols_; }
    std::size_t size() const { return v_.size(); }
    bool empty() const { return v_.empty(); }

    cplx &operator()(std::size_t i, std::size_t j) { return v_[i * cols_ + j]; }
    const cplx &operator()(std::size_t i, std::size_t j) const { return v_[i * cols_ + j]; }

    cplx *data() { return v_.data(); }
    const cplx *data() const { return v_.data(); }

    bool all_finite() const;

    CMatrix hermitian() const;
    CMatrix scaled(cplx factor) const;

    bool operator==(const CMatrix &other) const = default;

  private:
    std::size_t rows_ = 0, cols_ = 0;
    std::vector<cplx> v_;
};

/// A * B; throws on dimension mismatch.
CMatrix matmul(const CMatrix &a, const CMatrix &b);

CMatrix operator+(const CMatrix &a, const CMatrix &b);
CMatrix operator-(const CMatrix &a, const CMatrix &b);

/// Column j as a rows()-vector.
std::vector<cplx> column(const CMatrix &a, std::size_t j);

/// A * x for a column vector x; throws on dimension mismatch.
std::vector<cplx> matvec(const CMatrix &a, const std::vector<cplx> &x);

/// sqrt(sum |a_ij|^2); throws on empty input.
double frob_norm(const CMatrix &a);

double max_abs_diff(const CMatrix &a, const CMatrix &b);

} // namespace jhpf

#endif
