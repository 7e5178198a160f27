#ifndef JHPF_SVD_HPP
#define JHPF_SVD_HPP

#include "jhpf/cmatrix.hpp"

namespace jhpf {

struct SvdResult {
    CMatrix u;             // rows x k, orthonormal columns
    std::vector<double> s; // k singular values, descending
    CMatrix v;             // cols x k, orthonormal columns
};

/// Compact SVD A = U diag(S) V^H via one-sided Jacobi, k = min(rows, cols).
/// Intended for the small matrices this project works with (<= 32x16).
SvdResult svd_compact(const CMatrix &a);

} // namespace jhpf

#endif
