#ifndef MSMAE_REF_HPP
#define MSMAE_REF_HPP

#include <cstddef>
#include <vector>

// Serial reference implementations, written as direct scalar transcriptions
// of the defining formulas. This library depends on nothing from the main
// library and is linked only by the tests and the kernel benchmark, where
// it serves as the independent oracle and the serial baseline.

namespace msmae::ref {

// c(n,m) = a(n,k) * b(k,m), classic triple loop.
void matmul(const double* a, const double* b, double* c,
            std::size_t n, std::size_t k, std::size_t m);

// y(n,dout) = x(n,din) * w(din,dout) + bias(dout)
void linear(const double* x, const double* w, const double* bias, double* y,
            std::size_t n, std::size_t din, std::size_t dout);

void layernorm(const double* x, const double* gamma, const double* beta,
               double* y, std::size_t n, std::size_t d, double eps);

void softmax_row(const double* z, double* p, std::size_t d);

double gelu(double x);

// One pre-norm transformer block:
//   x + attn(ln1(x)), then + mlp(ln2(x)), attention = softmax(Q K^T / sqrt(dh)) V.
// Weight shapes: wqkv(d,3d) with columns [q|k|v], wproj(d,d), wfc1(d,hidden),
// wfc2(hidden,d); layernorm eps matches the main implementation.
struct BlockWeights {
    const double* ln1_g;
    const double* ln1_b;
    const double* wqkv;
    const double* bqkv;
    const double* wproj;
    const double* bproj;
    const double* ln2_g;
    const double* ln2_b;
    const double* wfc1;
    const double* bfc1;
    const double* wfc2;
    const double* bfc2;
};

void transformer_block(const double* x, double* y, std::size_t n, std::size_t d,
                       std::size_t heads, std::size_t hidden,
                       const BlockWeights& wts, double ln_eps);

// Transposed convolution in scatter form: every input pixel adds its
// weighted kernel window into the output. Weights (kh,kw,cin,cout), HWC maps.
void tconv2d(const double* in, std::size_t in_h, std::size_t in_w, std::size_t cin,
             const double* w, const double* bias, std::size_t kernel,
             std::size_t stride, std::size_t pad,
             double* out, std::size_t out_h, std::size_t out_w, std::size_t cout);

void dwconv3x3(const double* in, std::size_t h, std::size_t w, std::size_t c,
               const double* wgt, const double* bias, double* out);

double mean_abs_err(const double* a, const double* b, std::size_t n);
double mean_sq_err(const double* a, const double* b, std::size_t n);

// Brute-force area-average resize: for every output cell, integrate the
// exact footprint overlap against every input pixel. HWC layout.
void area_resize(const double* in, std::size_t in_h, std::size_t in_w, std::size_t c,
                 double* out, std::size_t out_h, std::size_t out_w);

// Direct per-(pos, i) evaluation of the 2-D sine/cosine positional table.
// dim divisible by 4; scale multiplies the position before encoding.
// Layout: first dim/2 features encode x (alternating sin/cos per frequency),
// last dim/2 encode y.
std::vector<double> posenc_2d(std::size_t grid_side, std::size_t dim,
                              double temperature, double scale);

// Exhaustive kNN classification accuracy under cosine distance with full
// stable sorting; majority vote, ties to the smallest class id.
double knn_accuracy(const std::vector<std::vector<double>>& train_feats,
                    const std::vector<int>& train_labels,
                    const std::vector<std::vector<double>>& val_feats,
                    const std::vector<int>& val_labels,
                    std::size_t k);

} // namespace msmae::ref

#endif
