#ifndef MSMAE_ENCODER_HPP
#define MSMAE_ENCODER_HPP

#include <vector>

#include "msmae/layers.hpp"
#include "msmae/patching.hpp"
#include "msmae/posenc.hpp"

namespace msmae {

struct EncoderConfig {
    std::size_t input_size = 224;
    std::size_t patch_size = 16;
    std::size_t in_channels = 3;
    std::size_t embed_dim = 768; // divisible by heads and by 4
    std::size_t depth = 12;
    std::size_t heads = 12;
    double mlp_ratio = 4.0;
    bool use_gsd_posenc = true;
    bool use_class_token = true;
    double posenc_temperature = 10000.0;
    double reference_gsd = 1.0;
    GsdFactorOrientation orientation = GsdFactorOrientation::GroundOverReference;

    std::size_t grid_side() const { return input_size / patch_size; }
    std::size_t n_patches() const { return grid_side() * grid_side(); }
    std::size_t patch_len() const { return patch_size * patch_size * in_channels; }
    PosEncConfig posenc() const {
        return {embed_dim, posenc_temperature, reference_gsd, orientation};
    }
    void validate() const;
};

// Patch embedding plus the transformer over visible tokens. Positional rows
// are taken from the full grid table at the indices the mask plan kept, so
// every token is encoded at its true grid position; the class token, when
// enabled, carries no positional term. With depth == 0 the blocks and the
// final norm are skipped, leaving tokens + positional rows directly
// observable (the degenerate path the tests probe).
class Encoder {
public:
    Encoder(ParamHost& host, const EncoderConfig& cfg);

    // (n_patches, P*P*C) -> (n_patches, D) affine embedding.
    Tensor embed_patches(const Tensor& patches);
    Tensor embed_backward(const Tensor& dtokens);

    // visible_tokens = embedded rows gathered at plan.visible_idx. Output
    // rows: [class token,] one per visible patch, in plan order.
    Tensor encode(const Tensor& visible_tokens, const MaskPlan& plan, double gsd);
    // Gradient w.r.t. visible_tokens; parameter grads accumulate.
    Tensor encode_backward(const Tensor& dy);

    const EncoderConfig& config() const { return cfg_; }

private:
    EncoderConfig cfg_;
    Linear patch_embed_;
    Param* cls_token_ = nullptr; // (D), present iff use_class_token
    std::vector<TransformerBlock> blocks_;
    LayerNorm final_norm_;
    std::size_t n_in_ = 0; // rows fed to encode (without class token)
};

} // namespace msmae

#endif
