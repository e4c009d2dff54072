#include "msmae/decoder.hpp"

#include <algorithm>
#include <stdexcept>
#include <string>

namespace msmae {

namespace {

// Number of x2 stages needed between 4*fm_side and target; throws when the
// geometry cannot be bridged by whole doublings.
std::size_t lub_stages(std::size_t fm_side, std::size_t target) {
    std::size_t after_rb = 4 * fm_side;
    if (after_rb > target || target % after_rb != 0)
        throw std::invalid_argument(
            "laplacian branch: target " + std::to_string(target) + " not reachable from map side " +
            std::to_string(fm_side) + "; needs 4 * 2^k upsampling factor");
    std::size_t factor = target / after_rb;
    std::size_t k = 0;
    while (factor > 1) {
        if (factor % 2 != 0)
            throw std::invalid_argument(
                "laplacian branch: target " + std::to_string(target) + " not reachable from map side " +
                std::to_string(fm_side) + "; needs 4 * 2^k upsampling factor");
        factor /= 2;
        ++k;
    }
    return k;
}

} // namespace

bool branch_reads_x4(std::size_t token_grid_side, std::size_t target_side) {
    return target_side >= 16 * token_grid_side;
}

void DecoderConfig::validate() const {
    if (latent_dim == 0 || decode_dim == 0)
        throw std::invalid_argument("decoder config: zero width");
    if (decode_dim % 4 != 0)
        throw std::invalid_argument("decoder config: decode_dim must be a multiple of 4");
    if (heads == 0 || decode_dim % heads != 0)
        throw std::invalid_argument("decoder config: decode_dim must be divisible by heads");
    if (token_grid_side == 0) throw std::invalid_argument("decoder config: empty token grid");
    if (out_channels == 0) throw std::invalid_argument("decoder config: no output channels");
    if (fmb_per_block == 0)
        throw std::invalid_argument("decoder config: need at least one feature-mapping block");
    // Both branch geometries must be realizable; constructing them checks.
}

// ---- LaplacianBranch ---------------------------------------------------------

LaplacianBranch::LaplacianBranch(ParamHost& host, const std::string& prefix,
                                 std::size_t channels, std::size_t out_channels,
                                 std::size_t fm_side, std::size_t target_side,
                                 std::size_t fmb_count)
    : fm_side_(fm_side), target_(target_side),
      rb_up4_(host, prefix + ".rb.up4", channels, channels, 4, 2, 1),
      rb_dw_(host, prefix + ".rb.dw", channels),
      rb_pw_(host, prefix + ".rb.pw", channels, channels),
      rb_up2_(host, prefix + ".rb.up2", channels, out_channels, 2, 2, 0) {
    std::size_t k = lub_stages(fm_side, target_side);
    fmbs_.reserve(fmb_count);
    for (std::size_t i = 0; i < fmb_count; ++i) {
        std::string p = prefix + ".fmb" + std::to_string(i);
        fmbs_.push_back(Fmb{DepthwiseConv3x3(host, p + ".dw", channels), Gelu{},
                            Conv1x1(host, p + ".pw", channels, channels)});
    }
    lub_.reserve(k);
    for (std::size_t i = 0; i < k; ++i) {
        std::string p = prefix + ".lub" + std::to_string(i);
        LubStage stage{ConvTranspose2d(host, p + ".up", channels, channels, 2, 2, 0),
                       LayerNormChannels(host, p + ".norm", channels), Gelu{},
                       /*trailing=*/i + 1 == k};
        lub_.push_back(std::move(stage));
    }
}

Tensor LaplacianBranch::forward(const Tensor& fm) {
    if (fm.ndim() != 3 || fm.dim(0) != fm_side_ || fm.dim(1) != fm_side_)
        throw std::invalid_argument("laplacian branch: feature map side mismatch");
    Tensor x = fm;
    for (auto& f : fmbs_) x = f.pw.forward(f.gelu.forward(f.dw.forward(x)));
    for (auto& s : lub_) {
        x = s.up.forward(x);
        if (!s.trailing) x = s.gelu.forward(s.norm.forward(x));
    }
    x = rb_up2_.forward(rb_pw_.forward(rb_dw_.forward(rb_up4_.forward(x))));
    return x;
}

Tensor LaplacianBranch::backward(const Tensor& dout) {
    Tensor g = rb_up4_.backward(rb_dw_.backward(rb_pw_.backward(rb_up2_.backward(dout))));
    for (auto it = lub_.rbegin(); it != lub_.rend(); ++it) {
        if (!it->trailing) g = it->norm.backward(it->gelu.backward(g));
        g = it->up.backward(g);
    }
    for (auto it = fmbs_.rbegin(); it != fmbs_.rend(); ++it)
        g = it->dw.backward(it->gelu.backward(it->pw.backward(g)));
    return g;
}

// ---- Decoder ----------------------------------------------------------------

Decoder::Decoder(ParamHost& host, const DecoderConfig& cfg)
    : cfg_(cfg), embed_(host, "dec.embed", cfg.latent_dim, cfg.decode_dim),
      final_norm_(host, "dec.norm", cfg.decode_dim),
      up_a_(host, "dec.up_a", cfg.decode_dim, cfg.decode_dim, 2, 2, 0),
      up_b_(host, "dec.up_b", cfg.decode_dim, cfg.decode_dim, 2, 2, 0),
      mid_norm_(host, "dec.up_mid_norm", cfg.decode_dim),
      low_(host, "dec.low", cfg.decode_dim, cfg.out_channels,
           branch_reads_x4(cfg.token_grid_side, cfg.low_out_size) ? 4 * cfg.token_grid_side
                                                                  : 2 * cfg.token_grid_side,
           cfg.low_out_size, cfg.fmb_per_block),
      high_(host, "dec.high", cfg.decode_dim, cfg.out_channels,
            branch_reads_x4(cfg.token_grid_side, cfg.high_out_size) ? 4 * cfg.token_grid_side
                                                                    : 2 * cfg.token_grid_side,
            cfg.high_out_size, cfg.fmb_per_block) {
    cfg_.validate();
    low_from_x4_ = branch_reads_x4(cfg.token_grid_side, cfg.low_out_size);
    high_from_x4_ = branch_reads_x4(cfg.token_grid_side, cfg.high_out_size);
    mask_token_ = host.add("dec.mask_token", {cfg.decode_dim}, ParamInit::normal(0.02));
    blocks_.reserve(cfg.decode_depth);
    for (std::size_t i = 0; i < cfg.decode_depth; ++i)
        blocks_.emplace_back(host, "dec.block" + std::to_string(i), cfg.decode_dim, cfg.heads,
                             cfg.mlp_ratio);
}

Tensor Decoder::decode_tokens(const Tensor& latents, const MaskPlan& plan, double gsd) {
    std::size_t cls = cfg_.has_class_token ? 1 : 0;
    std::size_t n_vis = plan.visible_idx.size();
    if (latents.ndim() != 2 || latents.dim(0) != cls + n_vis || latents.dim(1) != cfg_.latent_dim)
        throw std::invalid_argument("decode_tokens: latent rows do not match the plan");
    if (plan.n_patches() != cfg_.n_patches())
        throw std::invalid_argument("decode_tokens: plan grid does not match the config");
    if (cfg_.use_gsd_posenc && !(gsd > 0.0))
        throw std::invalid_argument("decode_tokens: gsd must be positive when gsd scaling is on");

    plan_cache_ = plan;
    latent_rows_ = latents.dim(0);

    Tensor proj = embed_.forward(latents); // ([cls +] n_vis, dd)
    std::size_t dd = cfg_.decode_dim;
    std::size_t n = cfg_.n_patches();

    Tensor vis({n_vis, dd});
    std::copy_n(proj.data() + cls * dd, n_vis * dd, vis.data());
    Tensor patch_rows = scatter_with_mask_tokens(vis, plan, mask_token_->value);

    PositionalGrid grid = cfg_.use_gsd_posenc
                              ? gsd_2d_sincos(cfg_.token_grid_side, gsd, cfg_.posenc())
                              : standard_2d_sincos(cfg_.token_grid_side, cfg_.posenc());

    Tensor x({cls + n, dd});
    if (cls) std::copy_n(proj.data(), dd, x.data()); // class row, no positional term
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dd; ++j)
            x.at(cls + i, j) = patch_rows.at(i, j) + grid.values.at(i, j);

    if (cfg_.decode_depth > 0) {
        for (auto& blk : blocks_) x = blk.forward(x);
        x = final_norm_.forward(x);
    }

    Tensor out({n, dd});
    std::copy_n(x.data() + cls * dd, n * dd, out.data());
    return out;
}

Tensor Decoder::decode_tokens_backward(const Tensor& dtokens) {
    std::size_t cls = cfg_.has_class_token ? 1 : 0;
    std::size_t n = cfg_.n_patches(), dd = cfg_.decode_dim;
    dtokens.require_shape({n, dd}, "decode_tokens_backward");

    Tensor g({cls + n, dd}); // zero class row: it was dropped from the output
    std::copy_n(dtokens.data(), n * dd, g.data() + cls * dd);

    if (cfg_.decode_depth > 0) {
        g = final_norm_.backward(g);
        for (auto it = blocks_.rbegin(); it != blocks_.rend(); ++it) g = it->backward(g);
    }

    std::size_t n_vis = plan_cache_.visible_idx.size();
    Tensor dproj({cls + n_vis, dd});
    if (cls) std::copy_n(g.data(), dd, dproj.data());
    for (std::size_t k = 0; k < n_vis; ++k) {
        std::size_t src = plan_cache_.visible_idx[k];
        for (std::size_t j = 0; j < dd; ++j) dproj.at(cls + k, j) = g.at(cls + src, j);
    }
    for (std::size_t m : plan_cache_.masked_idx)
        for (std::size_t j = 0; j < dd; ++j) mask_token_->grad[j] += g.at(cls + m, j);

    return embed_.backward(dproj);
}

std::pair<Tensor, Tensor> Decoder::upsample_stage(const Tensor& tokens) {
    std::size_t n = cfg_.token_grid_side, dd = cfg_.decode_dim;
    if (tokens.ndim() != 2 || tokens.dim(0) != n * n || tokens.dim(1) != dd)
        throw std::invalid_argument("upsample_stage: token count is not the config grid squared");
    Tensor fm({n, n, dd});
    std::copy_n(tokens.data(), tokens.numel(), fm.data());
    Tensor map2 = up_a_.forward(fm);
    Tensor map4 = up_b_.forward(mid_gelu_.forward(mid_norm_.forward(map2)));
    map2_cache_ = map2;
    map4_cache_ = map4;
    return {std::move(map2), std::move(map4)};
}

Tensor Decoder::upsample_backward(const Tensor& dmap2, const Tensor& dmap4) {
    Tensor dm2 = dmap2;
    {
        Tensor through = mid_norm_.backward(mid_gelu_.backward(up_b_.backward(dmap4)));
        for (std::size_t i = 0; i < dm2.numel(); ++i) dm2[i] += through[i];
    }
    Tensor dfm = up_a_.backward(dm2);
    std::size_t n = cfg_.token_grid_side, dd = cfg_.decode_dim;
    Tensor dtokens({n * n, dd});
    std::copy_n(dfm.data(), dfm.numel(), dtokens.data());
    return dtokens;
}

std::pair<RasterImage, RasterImage> Decoder::decode_forward(const Tensor& latents,
                                                            const MaskPlan& plan, double gsd) {
    Tensor tokens = decode_tokens(latents, plan, gsd);
    auto [map2, map4] = upsample_stage(tokens);
    Tensor low_img = low_.forward(low_from_x4_ ? map4 : map2);
    Tensor high_img = high_.forward(high_from_x4_ ? map4 : map2);
    // The low band depicts the scene at the input's ground resolution; the
    // high band covers the same footprint with more pixels.
    double low_gsd = gsd > 0.0 ? gsd : 1.0;
    double high_gsd = low_gsd * double(cfg_.low_out_size) / double(cfg_.high_out_size);
    return {RasterImage{std::move(low_img), low_gsd}, RasterImage{std::move(high_img), high_gsd}};
}

Tensor Decoder::decode_backward(const Tensor& dlow, const Tensor& dhigh) {
    Tensor dm_low = low_.backward(dlow);
    Tensor dm_high = high_.backward(dhigh);
    Tensor dmap2(map2_cache_.shape());
    Tensor dmap4(map4_cache_.shape());
    auto add_into = [](Tensor& dst, const Tensor& src) {
        for (std::size_t i = 0; i < dst.numel(); ++i) dst[i] += src[i];
    };
    add_into(low_from_x4_ ? dmap4 : dmap2, dm_low);
    add_into(high_from_x4_ ? dmap4 : dmap2, dm_high);
    Tensor dtokens = upsample_backward(dmap2, dmap4);
    return decode_tokens_backward(dtokens);
}

} // namespace msmae
