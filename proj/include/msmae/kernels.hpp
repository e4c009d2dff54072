#ifndef MSMAE_KERNELS_HPP
#define MSMAE_KERNELS_HPP

#include <cstddef>
#include <cstdint>
#include <vector>

// OpenMP-parallel compute kernels. Parallelism is always over disjoint
// output elements and scalar reductions go through fixed-size block
// partials, so results are bit-identical for any thread count. A naive
// serial implementation of the same contracts lives in src/ref/ and is
// used by the tests and the kernel benchmark.

namespace msmae::kernels {

// C(n,m) = A(n,k) * B(k,m)
void matmul(const double* a, const double* b, double* c,
            std::size_t n, std::size_t k, std::size_t m);

// C(n,m) = A(n,k) * B(m,k)^T
void matmul_nt(const double* a, const double* b, double* c,
               std::size_t n, std::size_t k, std::size_t m);

// C(k,m) += A(n,k)^T * B(n,m)
void matmul_tn_acc(const double* a, const double* b, double* c,
                   std::size_t n, std::size_t k, std::size_t m);

// y(n,m) += bias(m) per row
void add_bias_rows(double* y, const double* bias, std::size_t n, std::size_t m);

// db(m) += sum over rows of dy(n,m)
void bias_grad_acc(const double* dy, double* db, std::size_t n, std::size_t m);

// Row-wise layer norm over the last dimension, with affine gamma/beta.
// Caches mean and reciprocal std per row for the backward pass.
void layernorm_forward(const double* x, const double* gamma, const double* beta,
                       double* y, double* mean, double* rstd,
                       std::size_t n, std::size_t d, double eps);

void layernorm_backward(const double* x, const double* gamma,
                        const double* mean, const double* rstd,
                        const double* dy, double* dx,
                        double* dgamma, double* dbeta,
                        std::size_t n, std::size_t d);

// Row-wise softmax; backward consumes the forward output p.
void softmax_rows(const double* z, double* p, std::size_t n, std::size_t d);
void softmax_rows_backward(const double* p, const double* dp, double* dz,
                           std::size_t n, std::size_t d);

// Exact (erf) GELU, elementwise.
void gelu_forward(const double* x, double* y, std::size_t n);
void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n);

// Transposed 2-D convolution on HWC maps, weights laid out (kh, kw, cin, cout).
// out side = in_side * stride - 2 * pad + (kernel - stride).
std::size_t tconv2d_out_side(std::size_t in_side, std::size_t kernel,
                             std::size_t stride, std::size_t pad);

void tconv2d_forward(const double* in, std::size_t in_h, std::size_t in_w, std::size_t cin,
                     const double* w, const double* bias, std::size_t kernel,
                     std::size_t stride, std::size_t pad,
                     double* out, std::size_t out_h, std::size_t out_w, std::size_t cout);

void tconv2d_backward(const double* in, std::size_t in_h, std::size_t in_w, std::size_t cin,
                      const double* w, std::size_t kernel, std::size_t stride, std::size_t pad,
                      const double* dout, std::size_t out_h, std::size_t out_w, std::size_t cout,
                      double* din, double* dw, double* dbias);

// Depthwise 3x3 convolution, stride 1, zero padding 1, weights (c, 3, 3).
void dwconv3x3_forward(const double* in, std::size_t h, std::size_t w, std::size_t c,
                       const double* wgt, const double* bias, double* out);

void dwconv3x3_backward(const double* in, std::size_t h, std::size_t w, std::size_t c,
                        const double* wgt, const double* dout,
                        double* din, double* dw, double* dbias);

// Deterministic block-partial reduction: identical result for any thread
// count. f(i) must be a pure function of i.
template <class F>
double det_block_sum(std::size_t n, F&& f) {
    constexpr std::size_t block = 1024;
    const std::size_t nblocks = (n + block - 1) / block;
    std::vector<double> partial(nblocks, 0.0);
#pragma omp parallel for schedule(static)
    for (std::int64_t b = 0; b < static_cast<std::int64_t>(nblocks); ++b) {
        const std::size_t lo = static_cast<std::size_t>(b) * block;
        const std::size_t hi = lo + block < n ? lo + block : n;
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += f(i);
        partial[static_cast<std::size_t>(b)] = s;
    }
    double total = 0.0;
    for (double p : partial) total += p;
    return total;
}

double det_sum(const double* x, std::size_t n);

} // namespace msmae::kernels

#endif
