#include "jhpf/kernels.hpp"

namespace jhpf::kernels {

void dense_forward_ref(const double *x, const double *w, const double *bias, double *y,
                       std::size_t batch, std::size_t in, std::size_t out) {
    for (std::size_t b = 0; b < batch; ++b) {
        const double *xb = x + b * in;
        double *yb = y + b * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double *wo = w + o * in;
            double acc = bias ? bias[o] : 0.0;
            for (std::size_t i = 0; i < in; ++i)
                acc += xb[i] * wo[i];
            yb[o] = acc;
        }
    }
}

void dense_forward(const double *x, const double *w, const double *bias, double *y,
                   std::size_t batch, std::size_t in, std::size_t out) {
#pragma omp parallel for schedule(static) if (batch > 1)
    for (long long b = 0; b < static_cast<long long>(batch); ++b) {
        const double *xb = x + static_cast<std::size_t>(b) * in;
        double *yb = y + static_cast<std::size_t>(b) * out;
        for (std::size_t o = 0; o < out; ++o) {
            const double *wo = w + o * in;
            double acc = bias ? bias[o] : 0.0;
            for (std::size_t i = 0; i < in; ++i)
                acc += xb[i] * wo[i];
            yb[o] = acc;
        }
    }
}

void dense_backward_input_ref(const double *dy, const double *w, double *dx, std::size_t batch,
                              std::size_t in, std::size_t out) {
    for (std::size_t b = 0; b < batch; ++b) {
        const double *dyb = dy + b * out;
        double *dxb = dx + b * in;
        for (std::size_t i = 0; i < in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o)
                acc += dyb[o] * w[o * in + i];
            dxb[i] += acc;
        }
    }
}

void dense_backward_input(const double *dy, const double *w, double *dx, std::size_t batch,
                          std::size_t in, std::size_t out) {
#pragma omp parallel for schedule(static) if (batch > 1)
    for (long long b = 0; b < static_cast<long long>(batch); ++b) {
        const double *dyb = dy + static_cast<std::size_t>(b) * out;
        double *dxb = dx + static_cast<std::size_t>(b) * in;
        for (std::size_t i = 0; i < in; ++i) {
            double acc = 0.0;
            for (std::size_t o = 0; o < out; ++o)
                acc += dyb[o] * w[o * in + i];
            dxb[i] += acc;
        }
    }
}

void dense_backward_params_ref(const double *x, const double *dy, double *dw, double *db,
                               std::size_t batch, std::size_t in, std::size_t out) {
    for (std::size_t o = 0; o < out; ++o) {
        double *dwo = dw + o * in;
        double dbo = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            double g = dy[b * out + o];
            dbo += g;
            const double *xb = x + b * in;
            for (std::size_t i = 0; i < in; ++i)
                dwo[i] += g * xb[i];
        }
        db[o] += dbo;
    }
}

void dense_backward_params(const double *x, const double *dy, double *dw, double *db,
                           std::size_t batch, std::size_t in, std::size_t out) {
#pragma omp parallel for schedule(static) if (out > 1)
    for (long long o = 0; o < static_cast<long long>(out); ++o) {
        double *dwo = dw + static_cast<std::size_t>(o) * in;
        double dbo = 0.0;
        for (std::size_t b = 0; b < batch; ++b) {
            double g = dy[b * out + static_cast<std::size_t>(o)];
            dbo += g;
            const double *xb = x + b * in;
            for (std::size_t i = 0; i < in; ++i)
                dwo[i] += g * xb[i];
        }
        db[static_cast<std::size_t>(o)] += dbo;
    }
}

} // namespace jhpf::kernels
