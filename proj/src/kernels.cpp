#include "msmae/kernels.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace msmae::kernels {

namespace {
constexpr double kInvSqrt2 = 0.70710678118654752440;
constexpr double kInvSqrt2Pi = 0.39894228040143267794;
using i64 = std::int64_t;
} // namespace

void matmul(const double* a, const double* b, double* c,
            std::size_t n, std::size_t k, std::size_t m) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(n); ++i) {
        double* crow = c + static_cast<std::size_t>(i) * m;
        for (std::size_t j = 0; j < m; ++j) crow[j] = 0.0;
        const double* arow = a + static_cast<std::size_t>(i) * k;
        for (std::size_t p = 0; p < k; ++p) {
            const double av = arow[p];
            const double* brow = b + p * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void matmul_nt(const double* a, const double* b, double* c,
               std::size_t n, std::size_t k, std::size_t m) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(n); ++i) {
        const double* arow = a + static_cast<std::size_t>(i) * k;
        double* crow = c + static_cast<std::size_t>(i) * m;
        for (std::size_t j = 0; j < m; ++j) {
            const double* brow = b + j * k;
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += arow[p] * brow[p];
            crow[j] = s;
        }
    }
}

void matmul_tn_acc(const double* a, const double* b, double* c,
                   std::size_t n, std::size_t k, std::size_t m) {
    // c(k,m), each row of c owned by one iteration: deterministic.
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(k); ++i) {
        double* crow = c + static_cast<std::size_t>(i) * m;
        for (std::size_t r = 0; r < n; ++r) {
            const double av = a[r * k + static_cast<std::size_t>(i)];
            const double* brow = b + r * m;
            for (std::size_t j = 0; j < m; ++j) crow[j] += av * brow[j];
        }
    }
}

void add_bias_rows(double* y, const double* bias, std::size_t n, std::size_t m) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(n); ++i) {
        double* row = y + static_cast<std::size_t>(i) * m;
        for (std::size_t j = 0; j < m; ++j) row[j] += bias[j];
    }
}

void bias_grad_acc(const double* dy, double* db, std::size_t n, std::size_t m) {
#pragma omp parallel for schedule(static)
    for (i64 j = 0; j < static_cast<i64>(m); ++j) {
        double s = 0.0;
        for (std::size_t i = 0; i < n; ++i) s += dy[i * m + static_cast<std::size_t>(j)];
        db[static_cast<std::size_t>(j)] += s;
    }
}

void layernorm_forward(const double* x, const double* gamma, const double* beta,
                       double* y, double* mean, double* rstd,
                       std::size_t n, std::size_t d, double eps) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(n); ++i) {
        const double* xr = x + static_cast<std::size_t>(i) * d;
        double* yr = y + static_cast<std::size_t>(i) * d;
        double mu = 0.0;
        for (std::size_t j = 0; j < d; ++j) mu += xr[j];
        mu /= static_cast<double>(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double t = xr[j] - mu;
            var += t * t;
        }
        var /= static_cast<double>(d);
        const double rs = 1.0 / std::sqrt(var + eps);
        mean[i] = mu;
        rstd[i] = rs;
        for (std::size_t j = 0; j < d; ++j)
            yr[j] = (xr[j] - mu) * rs * gamma[j] + beta[j];
    }
}

void layernorm_backward(const double* x, const double* gamma,
                        const double* mean, const double* rstd,
                        const double* dy, double* dx,
                        double* dgamma, double* dbeta,
                        std::size_t n, std::size_t d) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(n); ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * d;
        const double* xr = x + off;
        const double* dyr = dy + off;
        double* dxr = dx + off;
        const double mu = mean[i];
        const double rs = rstd[i];
        double sum_g = 0.0, sum_gx = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            const double xhat = (xr[j] - mu) * rs;
            const double g = dyr[j] * gamma[j];
            sum_g += g;
            sum_gx += g * xhat;
        }
        const double inv_d = 1.0 / static_cast<double>(d);
        for (std::size_t j = 0; j < d; ++j) {
            const double xhat = (xr[j] - mu) * rs;
            const double g = dyr[j] * gamma[j];
            dxr[j] = (g - inv_d * sum_g - xhat * inv_d * sum_gx) * rs;
        }
    }
    // Parameter grads: one owner per feature index.
#pragma omp parallel for schedule(static)
    for (i64 j = 0; j < static_cast<i64>(d); ++j) {
        double dg = 0.0, db = 0.0;
        for (std::size_t i = 0; i < n; ++i) {
            const double xhat = (x[i * d + static_cast<std::size_t>(j)] - mean[i]) * rstd[i];
            dg += dy[i * d + static_cast<std::size_t>(j)] * xhat;
            db += dy[i * d + static_cast<std::size_t>(j)];
        }
        dgamma[static_cast<std::size_t>(j)] += dg;
        dbeta[static_cast<std::size_t>(j)] += db;
    }
}

void softmax_rows(const double* z, double* p, std::size_t n, std::size_t d) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(n); ++i) {
        const double* zr = z + static_cast<std::size_t>(i) * d;
        double* pr = p + static_cast<std::size_t>(i) * d;
        double mx = zr[0];
        for (std::size_t j = 1; j < d; ++j) mx = zr[j] > mx ? zr[j] : mx;
        double s = 0.0;
        for (std::size_t j = 0; j < d; ++j) {
            pr[j] = std::exp(zr[j] - mx);
            s += pr[j];
        }
        const double inv = 1.0 / s;
        for (std::size_t j = 0; j < d; ++j) pr[j] *= inv;
    }
}

void softmax_rows_backward(const double* p, const double* dp, double* dz,
                           std::size_t n, std::size_t d) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(n); ++i) {
        const std::size_t off = static_cast<std::size_t>(i) * d;
        double dot = 0.0;
        for (std::size_t j = 0; j < d; ++j) dot += p[off + j] * dp[off + j];
        for (std::size_t j = 0; j < d; ++j) dz[off + j] = p[off + j] * (dp[off + j] - dot);
    }
}

void gelu_forward(const double* x, double* y, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(n); ++i) {
        const double v = x[i];
        y[i] = 0.5 * v * (1.0 + std::erf(v * kInvSqrt2));
    }
}

void gelu_backward(const double* x, const double* dy, double* dx, std::size_t n) {
#pragma omp parallel for schedule(static)
    for (i64 i = 0; i < static_cast<i64>(n); ++i) {
        const double v = x[i];
        const double cdf = 0.5 * (1.0 + std::erf(v * kInvSqrt2));
        const double pdf = kInvSqrt2Pi * std::exp(-0.5 * v * v);
        dx[i] += dy[i] * (cdf + v * pdf);
    }
}

std::size_t tconv2d_out_side(std::size_t in_side, std::size_t kernel,
                             std::size_t stride, std::size_t pad) {
    return in_side * stride - 2 * pad + (kernel - stride);
}

void tconv2d_forward(const double* in, std::size_t in_h, std::size_t in_w, std::size_t cin,
                     const double* w, const double* bias, std::size_t kernel,
                     std::size_t stride, std::size_t pad,
                     double* out, std::size_t out_h, std::size_t out_w, std::size_t cout) {
    const i64 oh = static_cast<i64>(out_h), ow = static_cast<i64>(out_w);
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 oy = 0; oy < oh; ++oy) {
        for (i64 ox = 0; ox < ow; ++ox) {
            double* orow = out + (static_cast<std::size_t>(oy) * out_w + static_cast<std::size_t>(ox)) * cout;
            for (std::size_t co = 0; co < cout; ++co) orow[co] = bias ? bias[co] : 0.0;
            for (std::size_t ky = 0; ky < kernel; ++ky) {
                const i64 ny = oy + static_cast<i64>(pad) - static_cast<i64>(ky);
                if (ny < 0 || ny % static_cast<i64>(stride) != 0) continue;
                const i64 iy = ny / static_cast<i64>(stride);
                if (iy >= static_cast<i64>(in_h)) continue;
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                    const i64 nx = ox + static_cast<i64>(pad) - static_cast<i64>(kx);
                    if (nx < 0 || nx % static_cast<i64>(stride) != 0) continue;
                    const i64 ix = nx / static_cast<i64>(stride);
                    if (ix >= static_cast<i64>(in_w)) continue;
                    const double* ipix = in + (static_cast<std::size_t>(iy) * in_w + static_cast<std::size_t>(ix)) * cin;
                    const double* wk = w + (ky * kernel + kx) * cin * cout;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        const double v = ipix[ci];
                        const double* wr = wk + ci * cout;
                        for (std::size_t co = 0; co < cout; ++co) orow[co] += v * wr[co];
                    }
                }
            }
        }
    }
}

void tconv2d_backward(const double* in, std::size_t in_h, std::size_t in_w, std::size_t cin,
                      const double* w, std::size_t kernel, std::size_t stride, std::size_t pad,
                      const double* dout, std::size_t out_h, std::size_t out_w, std::size_t cout,
                      double* din, double* dw, double* dbias) {
    const i64 ih = static_cast<i64>(in_h), iw = static_cast<i64>(in_w);
    if (din) {
#pragma omp parallel for collapse(2) schedule(static)
        for (i64 iy = 0; iy < ih; ++iy) {
            for (i64 ix = 0; ix < iw; ++ix) {
                double* dpix = din + (static_cast<std::size_t>(iy) * in_w + static_cast<std::size_t>(ix)) * cin;
                for (std::size_t ky = 0; ky < kernel; ++ky) {
                    const i64 oy = iy * static_cast<i64>(stride) + static_cast<i64>(ky) - static_cast<i64>(pad);
                    if (oy < 0 || oy >= static_cast<i64>(out_h)) continue;
                    for (std::size_t kx = 0; kx < kernel; ++kx) {
                        const i64 ox = ix * static_cast<i64>(stride) + static_cast<i64>(kx) - static_cast<i64>(pad);
                        if (ox < 0 || ox >= static_cast<i64>(out_w)) continue;
                        const double* dorow = dout + (static_cast<std::size_t>(oy) * out_w + static_cast<std::size_t>(ox)) * cout;
                        const double* wk = w + (ky * kernel + kx) * cin * cout;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const double* wr = wk + ci * cout;
                            double s = 0.0;
                            for (std::size_t co = 0; co < cout; ++co) s += dorow[co] * wr[co];
                            dpix[ci] += s;
                        }
                    }
                }
            }
        }
    }
    if (dw) {
#pragma omp parallel for collapse(2) schedule(static)
        for (i64 ky = 0; ky < static_cast<i64>(kernel); ++ky) {
            for (i64 kx = 0; kx < static_cast<i64>(kernel); ++kx) {
                double* wk = dw + (static_cast<std::size_t>(ky) * kernel + static_cast<std::size_t>(kx)) * cin * cout;
                for (i64 iy = 0; iy < ih; ++iy) {
                    const i64 oy = iy * static_cast<i64>(stride) + ky - static_cast<i64>(pad);
                    if (oy < 0 || oy >= static_cast<i64>(out_h)) continue;
                    for (i64 ix = 0; ix < iw; ++ix) {
                        const i64 ox = ix * static_cast<i64>(stride) + kx - static_cast<i64>(pad);
                        if (ox < 0 || ox >= static_cast<i64>(out_w)) continue;
                        const double* ipix = in + (static_cast<std::size_t>(iy) * in_w + static_cast<std::size_t>(ix)) * cin;
                        const double* dorow = dout + (static_cast<std::size_t>(oy) * out_w + static_cast<std::size_t>(ox)) * cout;
                        for (std::size_t ci = 0; ci < cin; ++ci) {
                            const double v = ipix[ci];
                            double* wr = wk + ci * cout;
                            for (std::size_t co = 0; co < cout; ++co) wr[co] += v * dorow[co];
                        }
                    }
                }
            }
        }
    }
    if (dbias) {
#pragma omp parallel for schedule(static)
        for (i64 co = 0; co < static_cast<i64>(cout); ++co) {
            double s = 0.0;
            const std::size_t npix = out_h * out_w;
            for (std::size_t p = 0; p < npix; ++p) s += dout[p * cout + static_cast<std::size_t>(co)];
            dbias[static_cast<std::size_t>(co)] += s;
        }
    }
}

void dwconv3x3_forward(const double* in, std::size_t h, std::size_t w, std::size_t c,
                       const double* wgt, const double* bias, double* out) {
    const i64 hh = static_cast<i64>(h), ww = static_cast<i64>(w);
#pragma omp parallel for collapse(2) schedule(static)
    for (i64 y = 0; y < hh; ++y) {
        for (i64 x = 0; x < ww; ++x) {
            double* opix = out + (static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * c;
            for (std::size_t ch = 0; ch < c; ++ch) opix[ch] = bias ? bias[ch] : 0.0;
            for (int ky = 0; ky < 3; ++ky) {
                const i64 sy = y + ky - 1;
                if (sy < 0 || sy >= hh) continue;
                for (int kx = 0; kx < 3; ++kx) {
                    const i64 sx = x + kx - 1;
                    if (sx < 0 || sx >= ww) continue;
                    const double* ipix = in + (static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * c;
                    for (std::size_t ch = 0; ch < c; ++ch)
                        opix[ch] += ipix[ch] * wgt[(ch * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)];
                }
            }
        }
    }
}

void dwconv3x3_backward(const double* in, std::size_t h, std::size_t w, std::size_t c,
                        const double* wgt, const double* dout,
                        double* din, double* dw, double* dbias) {
    const i64 hh = static_cast<i64>(h), ww = static_cast<i64>(w);
    if (din) {
#pragma omp parallel for collapse(2) schedule(static)
        for (i64 y = 0; y < hh; ++y) {
            for (i64 x = 0; x < ww; ++x) {
                double* dpix = din + (static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * c;
                for (int ky = 0; ky < 3; ++ky) {
                    const i64 oy = y - (ky - 1);
                    if (oy < 0 || oy >= hh) continue;
                    for (int kx = 0; kx < 3; ++kx) {
                        const i64 ox = x - (kx - 1);
                        if (ox < 0 || ox >= ww) continue;
                        const double* dorow = dout + (static_cast<std::size_t>(oy) * w + static_cast<std::size_t>(ox)) * c;
                        for (std::size_t ch = 0; ch < c; ++ch)
                            dpix[ch] += dorow[ch] * wgt[(ch * 3 + static_cast<std::size_t>(ky)) * 3 + static_cast<std::size_t>(kx)];
                    }
                }
            }
        }
    }
    if (dw || dbias) {
#pragma omp parallel for schedule(static)
        for (i64 ch = 0; ch < static_cast<i64>(c); ++ch) {
            const std::size_t chs = static_cast<std::size_t>(ch);
            double db = 0.0;
            double dwk[9] = {0, 0, 0, 0, 0, 0, 0, 0, 0};
            for (i64 y = 0; y < hh; ++y) {
                for (i64 x = 0; x < ww; ++x) {
                    const double g = dout[(static_cast<std::size_t>(y) * w + static_cast<std::size_t>(x)) * c + chs];
                    db += g;
                    for (int ky = 0; ky < 3; ++ky) {
                        const i64 sy = y + ky - 1;
                        if (sy < 0 || sy >= hh) continue;
                        for (int kx = 0; kx < 3; ++kx) {
                            const i64 sx = x + kx - 1;
                            if (sx < 0 || sx >= ww) continue;
                            dwk[ky * 3 + kx] += g * in[(static_cast<std::size_t>(sy) * w + static_cast<std::size_t>(sx)) * c + chs];
                        }
                    }
                }
            }
            if (dw)
                for (int t = 0; t < 9; ++t) dw[chs * 9 + static_cast<std::size_t>(t)] += dwk[t];
            if (dbias) dbias[chs] += db;
        }
    }
}

double det_sum(const double* x, std::size_t n) {
    return det_block_sum(n, [x](std::size_t i) { return x[i]; });
}

} // namespace msmae::kernels
