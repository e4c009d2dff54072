#ifndef MSMAE_LAYERS_HPP
#define MSMAE_LAYERS_HPP

#include <string>

#include "msmae/params.hpp"
#include "msmae/tensor.hpp"

// Neural net building blocks with explicit forward/backward. Conventions:
//   - forward(x) caches whatever backward needs (layers are single-shot per
//     step: forward once, then backward once);
//   - backward(dy) returns dx and ACCUMULATES parameter gradients, so one
//     zero_grads() per step suffices and shared parameters just work;
//   - token tensors are (n, dim), feature maps (side, side, channels).

namespace msmae {

struct Linear {
    std::size_t din = 0, dout = 0;
    Param* w = nullptr; // (din, dout)
    Param* b = nullptr; // (dout)
    Tensor x_cache;

    Linear() = default;
    Linear(ParamHost& host, const std::string& prefix, std::size_t din, std::size_t dout);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
};

struct LayerNorm {
    std::size_t dim = 0;
    double eps = 1e-6;
    Param* gamma = nullptr;
    Param* beta = nullptr;
    Tensor x_cache, mean_cache, rstd_cache;

    LayerNorm() = default;
    LayerNorm(ParamHost& host, const std::string& prefix, std::size_t dim);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
};

struct Attention {
    std::size_t dim = 0, heads = 0;
    Linear qkv;  // dim -> 3*dim, columns [q | k | v]
    Linear proj; // dim -> dim
    Tensor qkv_cache;   // (n, 3*dim)
    Tensor probs_cache; // (heads, n, n) softmax rows

    Attention() = default;
    Attention(ParamHost& host, const std::string& prefix, std::size_t dim, std::size_t heads);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
};

struct Mlp {
    Linear fc1, fc2;
    Tensor pre_cache; // fc1 output before the nonlinearity

    Mlp() = default;
    Mlp(ParamHost& host, const std::string& prefix, std::size_t dim, std::size_t hidden);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
};

// Pre-norm block: x + attn(norm1(x)), then + mlp(norm2(...)).
struct TransformerBlock {
    LayerNorm norm1, norm2;
    Attention attn;
    Mlp mlp;

    TransformerBlock() = default;
    TransformerBlock(ParamHost& host, const std::string& prefix, std::size_t dim,
                     std::size_t heads, double mlp_ratio);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
};

struct ConvTranspose2d {
    std::size_t cin = 0, cout = 0, kernel = 0, stride = 0, pad = 0;
    Param* w = nullptr; // (kernel, kernel, cin, cout)
    Param* b = nullptr; // (cout)
    Tensor x_cache;

    ConvTranspose2d() = default;
    ConvTranspose2d(ParamHost& host, const std::string& prefix, std::size_t cin,
                    std::size_t cout, std::size_t kernel, std::size_t stride, std::size_t pad);
    std::size_t out_side(std::size_t in_side) const;
    Tensor forward(const Tensor& x); // (h, w, cin) -> (H, W, cout)
    Tensor backward(const Tensor& dy);
};

struct DepthwiseConv3x3 {
    std::size_t channels = 0;
    Param* w = nullptr; // (channels, 3, 3)
    Param* b = nullptr; // (channels)
    Tensor x_cache;

    DepthwiseConv3x3() = default;
    DepthwiseConv3x3(ParamHost& host, const std::string& prefix, std::size_t channels);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
};

// 1x1 convolution = per-pixel linear map.
struct Conv1x1 {
    Linear lin;

    Conv1x1() = default;
    Conv1x1(ParamHost& host, const std::string& prefix, std::size_t cin, std::size_t cout);
    Tensor forward(const Tensor& x); // (h, w, cin) -> (h, w, cout)
    Tensor backward(const Tensor& dy);

private:
    std::size_t h_ = 0, w_ = 0;
};

// Layer norm across the channel vector of every pixel of a feature map.
struct LayerNormChannels {
    LayerNorm norm;

    LayerNormChannels() = default;
    LayerNormChannels(ParamHost& host, const std::string& prefix, std::size_t channels);
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);

private:
    std::size_t h_ = 0, w_ = 0;
};

struct Gelu {
    Tensor x_cache;
    Tensor forward(const Tensor& x);
    Tensor backward(const Tensor& dy);
};

} // namespace msmae

#endif
