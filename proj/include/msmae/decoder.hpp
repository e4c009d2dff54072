#ifndef MSMAE_DECODER_HPP
#define MSMAE_DECODER_HPP

#include <utility>
#include <vector>

#include "msmae/imaging.hpp"
#include "msmae/layers.hpp"
#include "msmae/patching.hpp"
#include "msmae/posenc.hpp"

namespace msmae {

struct DecoderConfig {
    std::size_t latent_dim = 768; // width of incoming encoder tokens
    std::size_t decode_dim = 512; // width used throughout the decoder
    std::size_t decode_depth = 3;
    std::size_t heads = 16;
    double mlp_ratio = 4.0;
    std::size_t token_grid_side = 14;
    std::size_t low_out_size = 224;
    std::size_t high_out_size = 448;
    std::size_t out_channels = 3;
    std::size_t fmb_per_block = 2; // feature-mapping sub-blocks per branch
    bool has_class_token = true;   // must match the encoder
    bool use_gsd_posenc = true;
    double posenc_temperature = 10000.0;
    double reference_gsd = 1.0;
    GsdFactorOrientation orientation = GsdFactorOrientation::GroundOverReference;

    std::size_t n_patches() const { return token_grid_side * token_grid_side; }
    PosEncConfig posenc() const {
        return {decode_dim, posenc_temperature, reference_gsd, orientation};
    }
    void validate() const;
};

// One reconstruction branch of the pyramid. Structure:
//   feature mapping (x fmb_per_block):  3x3 depthwise conv, GELU, 1x1 conv
//   upsample chain (x k):               2x2 stride-2 transpose conv, with
//                                       channel-norm + GELU between stages
//   reconstruction:                     4x4 s2 p1 transpose conv, 3x3
//                                       depthwise, 1x1, 2x2 s2 transpose
//                                       conv down to out_channels
// The reconstruction tail is a fixed x4; k = log2(target / (4 * fm_side))
// upsample stages bridge the rest and must come out integral.
class LaplacianBranch {
public:
    LaplacianBranch(ParamHost& host, const std::string& prefix, std::size_t channels,
                    std::size_t out_channels, std::size_t fm_side, std::size_t target_side,
                    std::size_t fmb_count);

    Tensor forward(const Tensor& fm);
    Tensor backward(const Tensor& dout);

    std::size_t fm_side() const { return fm_side_; }
    std::size_t upsample_stages() const { return lub_.size(); }

private:
    struct Fmb {
        DepthwiseConv3x3 dw;
        Gelu gelu;
        Conv1x1 pw;
    };
    struct LubStage {
        ConvTranspose2d up;
        LayerNormChannels norm; // applied between stages, not after the last
        Gelu gelu;
        bool trailing = false;
    };
    std::size_t fm_side_ = 0, target_ = 0;
    std::vector<Fmb> fmbs_;
    std::vector<LubStage> lub_;
    ConvTranspose2d rb_up4_;
    DepthwiseConv3x3 rb_dw_;
    Conv1x1 rb_pw_;
    ConvTranspose2d rb_up2_;
};

// Latent-to-image decoder: a narrow transformer over the full token grid
// (mask tokens filled in), a two-stage deconvolutional enlargement of the
// token map, and one Laplacian branch per output band. Each branch draws
// from whichever enlarged map reaches its target with a whole number of
// x2 upsample stages, preferring the larger map.
class Decoder {
public:
    Decoder(ParamHost& host, const DecoderConfig& cfg);

    // latents: encoder output rows ([class,] visible...), latent_dim wide.
    // Projects, scatters mask tokens, adds positional rows, runs the
    // blocks, drops the class row: returns (n_patches, decode_dim).
    Tensor decode_tokens(const Tensor& latents, const MaskPlan& plan, double gsd);

    // (n_patches, decode_dim) -> the x2 and x4 feature maps.
    std::pair<Tensor, Tensor> upsample_stage(const Tensor& tokens);

    Tensor laplacian_low(const Tensor& fm) { return low_.forward(fm); }
    Tensor laplacian_high(const Tensor& fm) { return high_.forward(fm); }

    // Full pipeline. gsd is the ground sample distance of the token grid
    // (the encoder input's); output images carry the implied gsd of their
    // resolution.
    std::pair<RasterImage, RasterImage> decode_forward(const Tensor& latents,
                                                       const MaskPlan& plan, double gsd);
    // Gradients of decode_forward w.r.t. the latent rows.
    Tensor decode_backward(const Tensor& dlow, const Tensor& dhigh);

    const DecoderConfig& config() const { return cfg_; }
    bool low_uses_x4() const { return low_from_x4_; }
    bool high_uses_x4() const { return high_from_x4_; }

private:
    Tensor decode_tokens_backward(const Tensor& dtokens);
    Tensor upsample_backward(const Tensor& dmap2, const Tensor& dmap4);

    DecoderConfig cfg_;
    Linear embed_;
    Param* mask_token_ = nullptr;
    std::vector<TransformerBlock> blocks_;
    LayerNorm final_norm_;
    ConvTranspose2d up_a_, up_b_;
    LayerNormChannels mid_norm_;
    Gelu mid_gelu_;
    LaplacianBranch low_, high_;
    bool low_from_x4_ = true, high_from_x4_ = true;

    // step caches
    MaskPlan plan_cache_;
    std::size_t latent_rows_ = 0;
    Tensor map2_cache_, map4_cache_;
};

// Side of the enlarged map each branch reads from, given the token grid:
// the x4 map when the target is at least 16 * grid (so the fixed x4 tail
// plus a whole number of doublings fits), otherwise the x2 map.
bool branch_reads_x4(std::size_t token_grid_side, std::size_t target_side);

} // namespace msmae

#endif
