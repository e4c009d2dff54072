#ifndef MSMAE_PATCHING_HPP
#define MSMAE_PATCHING_HPP

#include <cstdint>
#include <vector>

#include "msmae/imaging.hpp"
#include "msmae/tensor.hpp"

namespace msmae {

// Non-overlapping P x P patches of a square image, flattened row-major
// (within a patch: y, then x, then channel), ordered row-major over the
// patch grid so patch index and positional-grid index coincide.
struct PatchGrid {
    Tensor patches; // (grid_side^2, P*P*C)
    std::size_t grid_side = 0;
    std::size_t patch_size = 0;
    std::size_t channels = 0;
    double source_gsd = 0.0;
};

// Which patch indices the encoder sees. Both lists are sorted; together
// they partition 0..n_patches-1.
struct MaskPlan {
    std::vector<std::size_t> visible_idx;
    std::vector<std::size_t> masked_idx;
    double mask_ratio = 0.0;
    std::uint64_t seed = 0;

    std::size_t n_patches() const { return visible_idx.size() + masked_idx.size(); }
    static MaskPlan all_visible(std::size_t n_patches);
};

PatchGrid patchify(const RasterImage& img, std::size_t patch_size);
RasterImage unpatchify(const PatchGrid& pg);

// Uniform random visible subset of size nearbyint(n * (1 - mask_ratio))
// (ties to even), drawn by a seeded Fisher-Yates shuffle of 0..n-1 whose
// first slots become the visible set. Throws if no patch stays visible.
MaskPlan sample_mask(std::size_t n_patches, double mask_ratio, std::uint64_t seed);

// rows(out) = rows(tokens) selected by idx, in idx order.
Tensor gather_rows(const Tensor& tokens, const std::vector<std::size_t>& idx);

// Inverse of gathering the visible rows: row visible_idx[k] of the output
// is row k of `visible`; every masked row is a copy of mask_token.
Tensor scatter_with_mask_tokens(const Tensor& visible, const MaskPlan& plan,
                                const Tensor& mask_token);

} // namespace msmae

#endif
