#include "msmae/patching.hpp"

#include <algorithm>
#include <cfenv>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

#include "msmae/rng.hpp"

namespace msmae {

PatchGrid patchify(const RasterImage& img, std::size_t patch_size) {
    std::size_t h = img.height(), w = img.width(), c = img.channels();
    if (h != w) throw std::invalid_argument("patchify: image must be square");
    if (patch_size < 1 || h % patch_size != 0)
        throw std::invalid_argument("patchify: side " + std::to_string(h) +
                                    " not divisible by patch size " +
                                    std::to_string(patch_size) + "; pad or resample first");
    std::size_t grid = h / patch_size;
    PatchGrid pg;
    pg.grid_side = grid;
    pg.patch_size = patch_size;
    pg.channels = c;
    pg.source_gsd = img.gsd;
    pg.patches = Tensor({grid * grid, patch_size * patch_size * c});
    for (std::size_t gy = 0; gy < grid; ++gy)
        for (std::size_t gx = 0; gx < grid; ++gx) {
            double* row = pg.patches.data() + (gy * grid + gx) * pg.patches.dim(1);
            std::size_t k = 0;
            for (std::size_t py = 0; py < patch_size; ++py)
                for (std::size_t px = 0; px < patch_size; ++px)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        row[k++] = img.pixels.at(gy * patch_size + py, gx * patch_size + px, ch);
        }
    return pg;
}

RasterImage unpatchify(const PatchGrid& pg) {
    std::size_t grid = pg.grid_side, p = pg.patch_size, c = pg.channels;
    if (pg.patches.ndim() != 2 || pg.patches.dim(0) != grid * grid ||
        pg.patches.dim(1) != p * p * c)
        throw std::invalid_argument("unpatchify: inconsistent patch grid fields");
    std::size_t side = grid * p;
    Tensor px({side, side, c});
    for (std::size_t gy = 0; gy < grid; ++gy)
        for (std::size_t gx = 0; gx < grid; ++gx) {
            const double* row = pg.patches.data() + (gy * grid + gx) * pg.patches.dim(1);
            std::size_t k = 0;
            for (std::size_t py = 0; py < p; ++py)
                for (std::size_t pxx = 0; pxx < p; ++pxx)
                    for (std::size_t ch = 0; ch < c; ++ch)
                        px.at(gy * p + py, gx * p + pxx, ch) = row[k++];
        }
    return {std::move(px), pg.source_gsd};
}

MaskPlan MaskPlan::all_visible(std::size_t n_patches) {
    MaskPlan plan;
    plan.visible_idx.resize(n_patches);
    std::iota(plan.visible_idx.begin(), plan.visible_idx.end(), std::size_t{0});
    plan.mask_ratio = 0.0;
    return plan;
}

MaskPlan sample_mask(std::size_t n_patches, double mask_ratio, std::uint64_t seed) {
    if (n_patches < 1) throw std::invalid_argument("sample_mask: no patches");
    if (!(mask_ratio > 0.0 && mask_ratio < 1.0))
        throw std::invalid_argument("sample_mask: mask_ratio must lie in (0,1)");
    auto n_vis = std::size_t(std::nearbyint(double(n_patches) * (1.0 - mask_ratio)));
    if (n_vis == 0)
        throw std::invalid_argument("sample_mask: mask_ratio leaves zero visible patches");

    std::vector<std::size_t> perm(n_patches);
    std::iota(perm.begin(), perm.end(), std::size_t{0});
    Rng rng(seed);
    for (std::size_t i = n_patches - 1; i >= 1; --i)
        std::swap(perm[i], perm[rng.below(i + 1)]);

    MaskPlan plan;
    plan.mask_ratio = mask_ratio;
    plan.seed = seed;
    plan.visible_idx.assign(perm.begin(), perm.begin() + n_vis);
    plan.masked_idx.assign(perm.begin() + n_vis, perm.end());
    std::sort(plan.visible_idx.begin(), plan.visible_idx.end());
    std::sort(plan.masked_idx.begin(), plan.masked_idx.end());
    return plan;
}

Tensor gather_rows(const Tensor& tokens, const std::vector<std::size_t>& idx) {
    std::size_t d = tokens.dim(1);
    Tensor out({idx.size(), d});
    for (std::size_t k = 0; k < idx.size(); ++k) {
        if (idx[k] >= tokens.dim(0))
            throw std::invalid_argument("gather_rows: index out of range");
        std::copy_n(tokens.data() + idx[k] * d, d, out.data() + k * d);
    }
    return out;
}

Tensor scatter_with_mask_tokens(const Tensor& visible, const MaskPlan& plan,
                                const Tensor& mask_token) {
    std::size_t d = mask_token.numel();
    if (visible.ndim() != 2 || visible.dim(0) != plan.visible_idx.size() || visible.dim(1) != d)
        throw std::invalid_argument(
            "scatter_with_mask_tokens: token rows do not match the plan's visible set");
    std::size_t n = plan.n_patches();
    Tensor out({n, d});
    for (std::size_t j : plan.masked_idx)
        std::copy_n(mask_token.data(), d, out.data() + j * d);
    for (std::size_t k = 0; k < plan.visible_idx.size(); ++k)
        std::copy_n(visible.data() + k * d, d, out.data() + plan.visible_idx[k] * d);
    return out;
}

} // namespace msmae
