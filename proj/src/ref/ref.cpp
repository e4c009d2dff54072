#include "ref.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>

namespace msmae::ref {

void matmul(const double* a, const double* b, double* c,
            std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < m; ++j) {
            double s = 0.0;
            for (std::size_t p = 0; p < k; ++p) s += a[i * k + p] * b[p * m + j];
            c[i * m + j] = s;
        }
    }
}

void linear(const double* x, const double* w, const double* bias, double* y,
            std::size_t n, std::size_t din, std::size_t dout) {
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < dout; ++j) {
            double s = bias ? bias[j] : 0.0;
            for (std::size_t p = 0; p < din; ++p) s += x[i * din + p] * w[p * dout + j];
            y[i * dout + j] = s;
        }
    }
}

void layernorm(const double* x, const double* gamma, const double* beta,
               double* y, std::size_t n, std::size_t d, double eps) {
    for (std::size_t i = 0; i < n; ++i) {
        const double* row = x + i * d;
        double mean = 0.0;
        for (std::size_t j = 0; j < d; ++j) mean += row[j];
        mean /= double(d);
        double var = 0.0;
        for (std::size_t j = 0; j < d; ++j) var += (row[j] - mean) * (row[j] - mean);
        var /= double(d);
        double rstd = 1.0 / std::sqrt(var + eps);
        for (std::size_t j = 0; j < d; ++j)
            y[i * d + j] = (row[j] - mean) * rstd * gamma[j] + beta[j];
    }
}

void softmax_row(const double* z, double* p, std::size_t d) {
    double mx = z[0];
    for (std::size_t j = 1; j < d; ++j) mx = std::max(mx, z[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < d; ++j) {
        p[j] = std::exp(z[j] - mx);
        sum += p[j];
    }
    for (std::size_t j = 0; j < d; ++j) p[j] /= sum;
}

double gelu(double x) {
    return 0.5 * x * (1.0 + std::erf(x / std::sqrt(2.0)));
}

void transformer_block(const double* x, double* y, std::size_t n, std::size_t d,
                       std::size_t heads, std::size_t hidden,
                       const BlockWeights& wts, double ln_eps) {
    if (d % heads != 0) throw std::invalid_argument("transformer_block: d % heads");
    std::size_t dh = d / heads;

    std::vector<double> normed(n * d), qkv(n * 3 * d), attn_out(n * d), tmp(n * d);
    layernorm(x, wts.ln1_g, wts.ln1_b, normed.data(), n, d, ln_eps);
    linear(normed.data(), wts.wqkv, wts.bqkv, qkv.data(), n, d, 3 * d);

    std::fill(attn_out.begin(), attn_out.end(), 0.0);
    std::vector<double> scores(n), probs(n);
    for (std::size_t h = 0; h < heads; ++h) {
        for (std::size_t i = 0; i < n; ++i) {
            for (std::size_t j = 0; j < n; ++j) {
                double s = 0.0;
                for (std::size_t p = 0; p < dh; ++p) {
                    double qv = qkv[i * 3 * d + h * dh + p];
                    double kv = qkv[j * 3 * d + d + h * dh + p];
                    s += qv * kv;
                }
                scores[j] = s / std::sqrt(double(dh));
            }
            softmax_row(scores.data(), probs.data(), n);
            for (std::size_t p = 0; p < dh; ++p) {
                double s = 0.0;
                for (std::size_t j = 0; j < n; ++j)
                    s += probs[j] * qkv[j * 3 * d + 2 * d + h * dh + p];
                attn_out[i * d + h * dh + p] = s;
            }
        }
    }
    linear(attn_out.data(), wts.wproj, wts.bproj, tmp.data(), n, d, d);
    std::vector<double> res1(n * d);
    for (std::size_t i = 0; i < n * d; ++i) res1[i] = x[i] + tmp[i];

    std::vector<double> normed2(n * d), hid(n * hidden), mlp(n * d);
    layernorm(res1.data(), wts.ln2_g, wts.ln2_b, normed2.data(), n, d, ln_eps);
    linear(normed2.data(), wts.wfc1, wts.bfc1, hid.data(), n, d, hidden);
    for (std::size_t i = 0; i < n * hidden; ++i) hid[i] = gelu(hid[i]);
    linear(hid.data(), wts.wfc2, wts.bfc2, mlp.data(), n, hidden, d);
    for (std::size_t i = 0; i < n * d; ++i) y[i] = res1[i] + mlp[i];
}

void tconv2d(const double* in, std::size_t in_h, std::size_t in_w, std::size_t cin,
             const double* w, const double* bias, std::size_t kernel,
             std::size_t stride, std::size_t pad,
             double* out, std::size_t out_h, std::size_t out_w, std::size_t cout) {
    for (std::size_t i = 0; i < out_h * out_w * cout; ++i)
        out[i] = bias ? bias[i % cout] : 0.0;
    for (std::size_t iy = 0; iy < in_h; ++iy)
        for (std::size_t ix = 0; ix < in_w; ++ix)
            for (std::size_t ky = 0; ky < kernel; ++ky)
                for (std::size_t kx = 0; kx < kernel; ++kx) {
                    std::int64_t oy = std::int64_t(iy * stride + ky) - std::int64_t(pad);
                    std::int64_t ox = std::int64_t(ix * stride + kx) - std::int64_t(pad);
                    if (oy < 0 || ox < 0 || oy >= std::int64_t(out_h) || ox >= std::int64_t(out_w))
                        continue;
                    for (std::size_t ci = 0; ci < cin; ++ci) {
                        double v = in[(iy * in_w + ix) * cin + ci];
                        const double* wrow = w + ((ky * kernel + kx) * cin + ci) * cout;
                        double* orow = out + (std::size_t(oy) * out_w + std::size_t(ox)) * cout;
                        for (std::size_t co = 0; co < cout; ++co) orow[co] += v * wrow[co];
                    }
                }
}

void dwconv3x3(const double* in, std::size_t h, std::size_t w, std::size_t c,
               const double* wgt, const double* bias, double* out) {
    for (std::size_t oy = 0; oy < h; ++oy)
        for (std::size_t ox = 0; ox < w; ++ox)
            for (std::size_t ch = 0; ch < c; ++ch) {
                double s = bias ? bias[ch] : 0.0;
                for (int ky = 0; ky < 3; ++ky)
                    for (int kx = 0; kx < 3; ++kx) {
                        std::int64_t iy = std::int64_t(oy) + ky - 1;
                        std::int64_t ix = std::int64_t(ox) + kx - 1;
                        if (iy < 0 || ix < 0 || iy >= std::int64_t(h) || ix >= std::int64_t(w))
                            continue;
                        s += wgt[ch * 9 + ky * 3 + kx] *
                             in[(std::size_t(iy) * w + std::size_t(ix)) * c + ch];
                    }
                out[(oy * w + ox) * c + ch] = s;
            }
}

double mean_abs_err(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += std::fabs(a[i] - b[i]);
    return s / double(n);
}

double mean_sq_err(const double* a, const double* b, std::size_t n) {
    double s = 0.0;
    for (std::size_t i = 0; i < n; ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return s / double(n);
}

void area_resize(const double* in, std::size_t in_h, std::size_t in_w, std::size_t c,
                 double* out, std::size_t out_h, std::size_t out_w) {
    double sy = double(in_h) / double(out_h);
    double sx = double(in_w) / double(out_w);
    for (std::size_t oy = 0; oy < out_h; ++oy)
        for (std::size_t ox = 0; ox < out_w; ++ox) {
            double y0 = oy * sy, y1 = (oy + 1) * sy;
            double x0 = ox * sx, x1 = (ox + 1) * sx;
            for (std::size_t ch = 0; ch < c; ++ch) {
                double acc = 0.0;
                for (std::size_t iy = 0; iy < in_h; ++iy) {
                    double oy_ov = std::min(y1, double(iy + 1)) - std::max(y0, double(iy));
                    if (oy_ov <= 0.0) continue;
                    for (std::size_t ix = 0; ix < in_w; ++ix) {
                        double ox_ov = std::min(x1, double(ix + 1)) - std::max(x0, double(ix));
                        if (ox_ov <= 0.0) continue;
                        acc += oy_ov * ox_ov * in[(iy * in_w + ix) * c + ch];
                    }
                }
                out[(oy * out_w + ox) * c + ch] = acc / (sy * sx);
            }
        }
}

std::vector<double> posenc_2d(std::size_t grid_side, std::size_t dim,
                              double temperature, double scale) {
    if (dim % 4 != 0) throw std::invalid_argument("posenc_2d: dim % 4");
    std::size_t n = grid_side * grid_side;
    std::size_t half = dim / 2;
    std::size_t pairs = dim / 4;
    std::vector<double> table(n * dim);
    for (std::size_t y = 0; y < grid_side; ++y)
        for (std::size_t x = 0; x < grid_side; ++x) {
            double* row = table.data() + (y * grid_side + x) * dim;
            for (std::size_t i = 0; i < pairs; ++i) {
                double div = std::pow(temperature, 2.0 * double(i) / double(dim));
                double px = (double(x) * scale) / div;
                double py = (double(y) * scale) / div;
                row[2 * i] = std::sin(px);
                row[2 * i + 1] = std::cos(px);
                row[half + 2 * i] = std::sin(py);
                row[half + 2 * i + 1] = std::cos(py);
            }
        }
    return table;
}

double knn_accuracy(const std::vector<std::vector<double>>& train_feats,
                    const std::vector<int>& train_labels,
                    const std::vector<std::vector<double>>& val_feats,
                    const std::vector<int>& val_labels,
                    std::size_t k) {
    auto cosine_dist = [](const std::vector<double>& a, const std::vector<double>& b) {
        double dot = 0.0, na = 0.0, nb = 0.0;
        for (std::size_t i = 0; i < a.size(); ++i) {
            dot += a[i] * b[i];
            na += a[i] * a[i];
            nb += b[i] * b[i];
        }
        double denom = std::sqrt(na) * std::sqrt(nb);
        return denom > 0.0 ? 1.0 - dot / denom : 1.0;
    };
    std::size_t correct = 0;
    for (std::size_t v = 0; v < val_feats.size(); ++v) {
        std::vector<std::pair<double, std::size_t>> ds;
        ds.reserve(train_feats.size());
        for (std::size_t t = 0; t < train_feats.size(); ++t)
            ds.emplace_back(cosine_dist(val_feats[v], train_feats[t]), t);
        std::sort(ds.begin(), ds.end());
        std::size_t kk = std::min(k, ds.size());
        std::map<int, std::size_t> votes;
        for (std::size_t i = 0; i < kk; ++i) votes[train_labels[ds[i].second]]++;
        int best = -1;
        std::size_t best_n = 0;
        for (auto& [lbl, cnt] : votes)
            if (cnt > best_n) { best = lbl; best_n = cnt; }
        if (best == val_labels[v]) ++correct;
    }
    return val_feats.empty() ? 0.0 : double(correct) / double(val_feats.size());
}

} // namespace msmae::ref
