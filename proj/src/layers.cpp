#include "msmae/layers.hpp"

#include <cmath>
#include <stdexcept>

#include "msmae/kernels.hpp"

namespace msmae {

namespace K = kernels;

static void require_store(const void* p, const char* what) {
    if (!p)
        throw std::logic_error(std::string(what) +
                               ": built against a counting host; no tensors to run on");
}

// ---- Linear ----------------------------------------------------------------

Linear::Linear(ParamHost& host, const std::string& prefix, std::size_t din_, std::size_t dout_)
    : din(din_), dout(dout_) {
    w = host.add(prefix + ".w", {din, dout}, ParamInit::xavier(din, dout));
    b = host.add(prefix + ".b", {dout}, ParamInit::zeros());
}

Tensor Linear::forward(const Tensor& x) {
    require_store(w, "Linear");
    if (x.ndim() != 2 || x.dim(1) != din) throw std::invalid_argument("Linear: bad input shape");
    x_cache = x;
    std::size_t n = x.dim(0);
    Tensor y({n, dout});
    K::matmul(x.data(), w->value.data(), y.data(), n, din, dout);
    K::add_bias_rows(y.data(), b->value.data(), n, dout);
    return y;
}

Tensor Linear::backward(const Tensor& dy) {
    std::size_t n = x_cache.dim(0);
    dy.require_shape({n, dout}, "Linear::backward");
    K::matmul_tn_acc(x_cache.data(), dy.data(), w->grad.data(), n, din, dout);
    K::bias_grad_acc(dy.data(), b->grad.data(), n, dout);
    Tensor dx({n, din});
    K::matmul_nt(dy.data(), w->value.data(), dx.data(), n, dout, din);
    return dx;
}

// ---- LayerNorm -------------------------------------------------------------

LayerNorm::LayerNorm(ParamHost& host, const std::string& prefix, std::size_t dim_) : dim(dim_) {
    gamma = host.add(prefix + ".gamma", {dim}, ParamInit::ones());
    beta = host.add(prefix + ".beta", {dim}, ParamInit::zeros());
}

Tensor LayerNorm::forward(const Tensor& x) {
    require_store(gamma, "LayerNorm");
    if (x.ndim() != 2 || x.dim(1) != dim)
        throw std::invalid_argument("LayerNorm: bad input shape");
    x_cache = x;
    std::size_t n = x.dim(0);
    Tensor y({n, dim});
    mean_cache = Tensor({n});
    rstd_cache = Tensor({n});
    K::layernorm_forward(x.data(), gamma->value.data(), beta->value.data(), y.data(),
                         mean_cache.data(), rstd_cache.data(), n, dim, eps);
    return y;
}

Tensor LayerNorm::backward(const Tensor& dy) {
    std::size_t n = x_cache.dim(0);
    dy.require_shape({n, dim}, "LayerNorm::backward");
    Tensor dx({n, dim});
    K::layernorm_backward(x_cache.data(), gamma->value.data(), mean_cache.data(),
                          rstd_cache.data(), dy.data(), dx.data(), gamma->grad.data(),
                          beta->grad.data(), n, dim);
    return dx;
}

// ---- Attention -------------------------------------------------------------

Attention::Attention(ParamHost& host, const std::string& prefix, std::size_t dim_,
                     std::size_t heads_)
    : dim(dim_), heads(heads_), qkv(host, prefix + ".qkv", dim_, 3 * dim_),
      proj(host, prefix + ".proj", dim_, dim_) {
    if (dim % heads != 0) throw std::invalid_argument("Attention: dim % heads != 0");
}

namespace {
// Contiguous (n, dh) copy of one head's Q, K, or V slice of the fused
// (n, 3*dim) projection. part: 0=Q, 1=K, 2=V.
Tensor head_slice(const Tensor& qkv, std::size_t dim, std::size_t heads, std::size_t h,
                  int part) {
    std::size_t n = qkv.dim(0), dh = dim / heads;
    Tensor out({n, dh});
    std::size_t base = std::size_t(part) * dim + h * dh;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dh; ++j) out.at(i, j) = qkv[i * 3 * dim + base + j];
    return out;
}

void head_slice_acc(Tensor& dqkv, const Tensor& part_grad, std::size_t dim, std::size_t heads,
                    std::size_t h, int part) {
    std::size_t n = dqkv.dim(0), dh = dim / heads;
    std::size_t base = std::size_t(part) * dim + h * dh;
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dh; ++j) dqkv[i * 3 * dim + base + j] += part_grad.at(i, j);
}
} // namespace

Tensor Attention::forward(const Tensor& x) {
    std::size_t n = x.dim(0), dh = dim / heads;
    double alpha = 1.0 / std::sqrt(double(dh));
    qkv_cache = qkv.forward(x);
    probs_cache = Tensor({heads, n, n});
    Tensor cat({n, dim});
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor q = head_slice(qkv_cache, dim, heads, h, 0);
        Tensor k = head_slice(qkv_cache, dim, heads, h, 1);
        Tensor v = head_slice(qkv_cache, dim, heads, h, 2);
        Tensor scores({n, n});
        K::matmul_nt(q.data(), k.data(), scores.data(), n, dh, n);
        for (std::size_t i = 0; i < scores.numel(); ++i) scores[i] *= alpha;
        double* probs = probs_cache.data() + h * n * n;
        K::softmax_rows(scores.data(), probs, n, n);
        Tensor out_h({n, dh});
        K::matmul(probs, v.data(), out_h.data(), n, n, dh);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < dh; ++j) cat.at(i, h * dh + j) = out_h.at(i, j);
    }
    return proj.forward(cat);
}

Tensor Attention::backward(const Tensor& dy) {
    std::size_t n = qkv_cache.dim(0), dh = dim / heads;
    double alpha = 1.0 / std::sqrt(double(dh));
    Tensor dcat = proj.backward(dy);
    Tensor dqkv({n, 3 * dim});
    for (std::size_t h = 0; h < heads; ++h) {
        Tensor q = head_slice(qkv_cache, dim, heads, h, 0);
        Tensor k = head_slice(qkv_cache, dim, heads, h, 1);
        Tensor v = head_slice(qkv_cache, dim, heads, h, 2);
        const double* probs = probs_cache.data() + h * n * n;

        Tensor dout_h({n, dh});
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < dh; ++j) dout_h.at(i, j) = dcat.at(i, h * dh + j);

        Tensor dv({n, dh});
        K::matmul_tn_acc(probs, dout_h.data(), dv.data(), n, n, dh);
        Tensor dprobs({n, n});
        K::matmul_nt(dout_h.data(), v.data(), dprobs.data(), n, dh, n);
        Tensor dscores({n, n});
        K::softmax_rows_backward(probs, dprobs.data(), dscores.data(), n, n);
        for (std::size_t i = 0; i < dscores.numel(); ++i) dscores[i] *= alpha;

        Tensor dq({n, dh});
        K::matmul(dscores.data(), k.data(), dq.data(), n, n, dh);
        Tensor dk({n, dh});
        K::matmul_tn_acc(dscores.data(), q.data(), dk.data(), n, n, dh);

        head_slice_acc(dqkv, dq, dim, heads, h, 0);
        head_slice_acc(dqkv, dk, dim, heads, h, 1);
        head_slice_acc(dqkv, dv, dim, heads, h, 2);
    }
    return qkv.backward(dqkv);
}

// ---- Mlp -------------------------------------------------------------------

Mlp::Mlp(ParamHost& host, const std::string& prefix, std::size_t dim, std::size_t hidden)
    : fc1(host, prefix + ".fc1", dim, hidden), fc2(host, prefix + ".fc2", hidden, dim) {}

Tensor Mlp::forward(const Tensor& x) {
    pre_cache = fc1.forward(x);
    Tensor act(pre_cache.shape());
    K::gelu_forward(pre_cache.data(), act.data(), pre_cache.numel());
    return fc2.forward(act);
}

Tensor Mlp::backward(const Tensor& dy) {
    Tensor dact = fc2.backward(dy);
    Tensor dpre(pre_cache.shape());
    K::gelu_backward(pre_cache.data(), dact.data(), dpre.data(), pre_cache.numel());
    return fc1.backward(dpre);
}

// ---- TransformerBlock ------------------------------------------------------

TransformerBlock::TransformerBlock(ParamHost& host, const std::string& prefix, std::size_t dim,
                                   std::size_t heads, double mlp_ratio)
    : norm1(host, prefix + ".norm1", dim), norm2(host, prefix + ".norm2", dim),
      attn(host, prefix + ".attn", dim, heads),
      mlp(host, prefix + ".mlp", dim, std::size_t(std::lround(double(dim) * mlp_ratio))) {}

Tensor TransformerBlock::forward(const Tensor& x) {
    Tensor a = attn.forward(norm1.forward(x));
    for (std::size_t i = 0; i < a.numel(); ++i) a[i] += x[i];
    Tensor m = mlp.forward(norm2.forward(a));
    for (std::size_t i = 0; i < m.numel(); ++i) m[i] += a[i];
    return m;
}

Tensor TransformerBlock::backward(const Tensor& dy) {
    Tensor da = norm2.backward(mlp.backward(dy));
    for (std::size_t i = 0; i < da.numel(); ++i) da[i] += dy[i];
    Tensor dx = norm1.backward(attn.backward(da));
    for (std::size_t i = 0; i < dx.numel(); ++i) dx[i] += da[i];
    return dx;
}

// ---- ConvTranspose2d -------------------------------------------------------

ConvTranspose2d::ConvTranspose2d(ParamHost& host, const std::string& prefix, std::size_t cin_,
                                 std::size_t cout_, std::size_t kernel_, std::size_t stride_,
                                 std::size_t pad_)
    : cin(cin_), cout(cout_), kernel(kernel_), stride(stride_), pad(pad_) {
    w = host.add(prefix + ".w", {kernel, kernel, cin, cout},
                 ParamInit::xavier(kernel * kernel * cin, kernel * kernel * cout));
    b = host.add(prefix + ".b", {cout}, ParamInit::zeros());
}

std::size_t ConvTranspose2d::out_side(std::size_t in_side) const {
    return K::tconv2d_out_side(in_side, kernel, stride, pad);
}

Tensor ConvTranspose2d::forward(const Tensor& x) {
    require_store(w, "ConvTranspose2d");
    if (x.ndim() != 3 || x.dim(2) != cin)
        throw std::invalid_argument("ConvTranspose2d: bad input shape");
    x_cache = x;
    std::size_t oh = out_side(x.dim(0)), ow = out_side(x.dim(1));
    Tensor y({oh, ow, cout});
    K::tconv2d_forward(x.data(), x.dim(0), x.dim(1), cin, w->value.data(), b->value.data(),
                       kernel, stride, pad, y.data(), oh, ow, cout);
    return y;
}

Tensor ConvTranspose2d::backward(const Tensor& dy) {
    std::size_t oh = out_side(x_cache.dim(0)), ow = out_side(x_cache.dim(1));
    dy.require_shape({oh, ow, cout}, "ConvTranspose2d::backward");
    Tensor dx(x_cache.shape());
    K::tconv2d_backward(x_cache.data(), x_cache.dim(0), x_cache.dim(1), cin, w->value.data(),
                        kernel, stride, pad, dy.data(), oh, ow, cout, dx.data(),
                        w->grad.data(), b->grad.data());
    return dx;
}

// ---- DepthwiseConv3x3 ------------------------------------------------------

DepthwiseConv3x3::DepthwiseConv3x3(ParamHost& host, const std::string& prefix,
                                   std::size_t channels_)
    : channels(channels_) {
    w = host.add(prefix + ".w", {channels, 3, 3}, ParamInit::xavier(9, 9));
    b = host.add(prefix + ".b", {channels}, ParamInit::zeros());
}

Tensor DepthwiseConv3x3::forward(const Tensor& x) {
    require_store(w, "DepthwiseConv3x3");
    if (x.ndim() != 3 || x.dim(2) != channels)
        throw std::invalid_argument("DepthwiseConv3x3: bad input shape");
    x_cache = x;
    Tensor y(x.shape());
    K::dwconv3x3_forward(x.data(), x.dim(0), x.dim(1), channels, w->value.data(),
                         b->value.data(), y.data());
    return y;
}

Tensor DepthwiseConv3x3::backward(const Tensor& dy) {
    dy.require_shape(x_cache.shape(), "DepthwiseConv3x3::backward");
    Tensor dx(x_cache.shape());
    K::dwconv3x3_backward(x_cache.data(), x_cache.dim(0), x_cache.dim(1), channels,
                          w->value.data(), dy.data(), dx.data(), w->grad.data(),
                          b->grad.data());
    return dx;
}

// ---- Conv1x1 ---------------------------------------------------------------

Conv1x1::Conv1x1(ParamHost& host, const std::string& prefix, std::size_t cin, std::size_t cout)
    : lin(host, prefix, cin, cout) {}

Tensor Conv1x1::forward(const Tensor& x) {
    if (x.ndim() != 3) throw std::invalid_argument("Conv1x1: expects a feature map");
    h_ = x.dim(0);
    w_ = x.dim(1);
    Tensor flat({h_ * w_, x.dim(2)});
    std::copy_n(x.data(), x.numel(), flat.data());
    Tensor y = lin.forward(flat);
    Tensor out({h_, w_, lin.dout});
    std::copy_n(y.data(), y.numel(), out.data());
    return out;
}

Tensor Conv1x1::backward(const Tensor& dy) {
    Tensor flat({h_ * w_, lin.dout});
    std::copy_n(dy.data(), dy.numel(), flat.data());
    Tensor dx = lin.backward(flat);
    Tensor out({h_, w_, lin.din});
    std::copy_n(dx.data(), dx.numel(), out.data());
    return out;
}

// ---- LayerNormChannels -----------------------------------------------------

LayerNormChannels::LayerNormChannels(ParamHost& host, const std::string& prefix,
                                     std::size_t channels)
    : norm(host, prefix, channels) {}

Tensor LayerNormChannels::forward(const Tensor& x) {
    if (x.ndim() != 3) throw std::invalid_argument("LayerNormChannels: expects a feature map");
    h_ = x.dim(0);
    w_ = x.dim(1);
    Tensor flat({h_ * w_, x.dim(2)});
    std::copy_n(x.data(), x.numel(), flat.data());
    Tensor y = norm.forward(flat);
    Tensor out({h_, w_, norm.dim});
    std::copy_n(y.data(), y.numel(), out.data());
    return out;
}

Tensor LayerNormChannels::backward(const Tensor& dy) {
    Tensor flat({h_ * w_, norm.dim});
    std::copy_n(dy.data(), dy.numel(), flat.data());
    Tensor dx = norm.backward(flat);
    Tensor out({h_, w_, norm.dim});
    std::copy_n(dx.data(), dx.numel(), out.data());
    return out;
}

// ---- Gelu ------------------------------------------------------------------

Tensor Gelu::forward(const Tensor& x) {
    x_cache = x;
    Tensor y(x.shape());
    kernels::gelu_forward(x.data(), y.data(), x.numel());
    return y;
}

Tensor Gelu::backward(const Tensor& dy) {
    Tensor dx(x_cache.shape());
    kernels::gelu_backward(x_cache.data(), dy.data(), dx.data(), x_cache.numel());
    return dx;
}

} // namespace msmae
