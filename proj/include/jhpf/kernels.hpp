#ifndef JHPF_KERNELS_HPP
#define JHPF_KERNELS_HPP

#include <cstddef>

namespace jhpf::kernels {

// Dense-layer kernels. X is batch x in (row-major), W is out x in, Y is
// batch x out. The OpenMP versions parallelize over independent output
// elements and keep each element's reduction order fixed, so they produce
// bit-identical results to the *_ref versions for any thread count.

void dense_forward(const double *x, const double *w, const double *bias, double *y,
                   std::size_t batch, std::size_t in, std::size_t out);
void dense_forward_ref(const double *x, const double *w, const double *bias, double *y,
                       std::size_t batch, std::size_t in, std::size_t out);

/// dX[b,i] += sum_o dY[b,o] W[o,i]
void dense_backward_input(const double *dy, const double *w, double *dx, std::size_t batch,
                          std::size_t in, std::size_t out);
void dense_backward_input_ref(const double *dy, const double *w, double *dx, std::size_t batch,
                              std::size_t in, std::size_t out);

/// dW[o,i] += sum_b X[b,i] dY[b,o];  db[o] += sum_b dY[b,o]
void dense_backward_params(const double *x, const double *dy, double *dw, double *db,
                           std::size_t batch, std::size_t in, std::size_t out);
void dense_backward_params_ref(const double *x, const double *dy, double *dw, double *db,
                               std::size_t batch, std::size_t in, std::size_t out);

} // namespace jhpf::kernels

#endif
