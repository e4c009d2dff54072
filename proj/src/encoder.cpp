#include "msmae/encoder.hpp"

#include <stdexcept>

namespace msmae {

void EncoderConfig::validate() const {
    if (input_size == 0 || patch_size == 0 || input_size % patch_size != 0)
        throw std::invalid_argument("encoder config: patch size must divide input size");
    if (embed_dim == 0 || embed_dim % 4 != 0)
        throw std::invalid_argument("encoder config: embed_dim must be a multiple of 4");
    if (heads == 0 || embed_dim % heads != 0)
        throw std::invalid_argument("encoder config: embed_dim must be divisible by heads");
    if (!(mlp_ratio > 0.0)) throw std::invalid_argument("encoder config: mlp_ratio <= 0");
    if (!(posenc_temperature > 1.0))
        throw std::invalid_argument("encoder config: posenc temperature must exceed 1");
    if (!(reference_gsd > 0.0))
        throw std::invalid_argument("encoder config: reference_gsd must be positive");
}

Encoder::Encoder(ParamHost& host, const EncoderConfig& cfg)
    : cfg_(cfg), patch_embed_(host, "enc.patch_embed", cfg.patch_len(), cfg.embed_dim),
      final_norm_(host, "enc.norm", cfg.embed_dim) {
    cfg_.validate();
    if (cfg_.use_class_token)
        cls_token_ = host.add("enc.cls_token", {cfg_.embed_dim}, ParamInit::normal(0.02));
    blocks_.reserve(cfg_.depth);
    for (std::size_t i = 0; i < cfg_.depth; ++i)
        blocks_.emplace_back(host, "enc.block" + std::to_string(i), cfg_.embed_dim, cfg_.heads,
                             cfg_.mlp_ratio);
}

Tensor Encoder::embed_patches(const Tensor& patches) {
    if (patches.ndim() != 2 || patches.dim(1) != cfg_.patch_len())
        throw std::invalid_argument("embed_patches: patch vector length mismatch");
    return patch_embed_.forward(patches);
}

Tensor Encoder::embed_backward(const Tensor& dtokens) { return patch_embed_.backward(dtokens); }

Tensor Encoder::encode(const Tensor& visible_tokens, const MaskPlan& plan, double gsd) {
    std::size_t d = cfg_.embed_dim;
    if (visible_tokens.ndim() != 2 || visible_tokens.dim(0) != plan.visible_idx.size() ||
        visible_tokens.dim(1) != d)
        throw std::invalid_argument("encode: token rows do not match the plan's visible set");
    if (plan.n_patches() != cfg_.n_patches())
        throw std::invalid_argument("encode: plan patch count does not match the config grid");
    if (cfg_.use_gsd_posenc && !(gsd > 0.0))
        throw std::invalid_argument("encode: gsd must be positive when gsd scaling is on");

    PositionalGrid grid = cfg_.use_gsd_posenc
                              ? gsd_2d_sincos(cfg_.grid_side(), gsd, cfg_.posenc())
                              : standard_2d_sincos(cfg_.grid_side(), cfg_.posenc());

    std::size_t n_vis = plan.visible_idx.size();
    n_in_ = n_vis;
    std::size_t rows = n_vis + (cls_token_ ? 1 : 0);
    Tensor x({rows, d});
    std::size_t off = 0;
    if (cls_token_) {
        for (std::size_t j = 0; j < d; ++j) x.at(0, j) = cls_token_->value[j];
        off = 1;
    }
    for (std::size_t k = 0; k < n_vis; ++k) {
        std::size_t src = plan.visible_idx[k];
        for (std::size_t j = 0; j < d; ++j)
            x.at(off + k, j) = visible_tokens.at(k, j) + grid.values.at(src, j);
    }

    if (cfg_.depth == 0) return x;
    for (auto& blk : blocks_) x = blk.forward(x);
    return final_norm_.forward(x);
}

Tensor Encoder::encode_backward(const Tensor& dy) {
    Tensor g = dy;
    if (cfg_.depth > 0) {
        g = final_norm_.backward(g);
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
    }
    std::size_t d = cfg_.embed_dim;
    std::size_t off = cls_token_ ? 1 : 0;
    if (cls_token_)
        for (std::size_t j = 0; j < d; ++j) cls_token_->grad[j] += g.at(0, j);
    Tensor dvis({n_in_, d});
    for (std::size_t k = 0; k < n_in_; ++k)
        for (std::size_t j = 0; j < d; ++j) dvis.at(k, j) = g.at(off + k, j);
    return dvis;
}

} // namespace msmae
