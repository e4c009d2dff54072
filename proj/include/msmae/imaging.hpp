#ifndef MSMAE_IMAGING_HPP
#define MSMAE_IMAGING_HPP

#include <cstdint>
#include <string>

#include "msmae/tensor.hpp"

namespace msmae {

// Pixel raster plus its ground sample distance in meters per pixel. The GSD
// is the carrier of absolute scale: crops keep it, resampling rescales it.
struct RasterImage {
    Tensor pixels; // (H, W, C), values in [0,1] for loaded images
    double gsd = 1.0;

    RasterImage() = default;
    RasterImage(Tensor px, double g) : pixels(std::move(px)), gsd(g) {}

    std::size_t height() const { return pixels.dim(0); }
    std::size_t width() const { return pixels.dim(1); }
    std::size_t channels() const { return pixels.dim(2); }
};

// Band-pass reconstruction targets. `high` holds signed residuals and is
// never clipped: high + blur_hr reassembles the source image exactly.
struct BandpassTargets {
    RasterImage low;     // band-limited target at network input resolution
    RasterImage high;    // high-frequency residual at source resolution
    RasterImage blur_hr; // low-passed source; high + blur_hr == source
};

// 8-bit PNG I/O. Loading converts grayscale/palette/alpha to RGB and maps
// to [0,1]; the caller supplies the GSD (it comes from the dataset
// manifest). Saving clips to [0,1]; accepts 1- or 3-channel images.
RasterImage load_png(const std::string& path, double gsd);
void save_png(const RasterImage& img, const std::string& path);

// Uniform-scale resize. Area averaging when shrinking, bicubic
// (Catmull-Rom, clamp-to-edge) when enlarging, identity copy when the size
// is unchanged. Output gsd = img.gsd * H / out_h. Rejects resizes whose
// x and y scale factors differ: a single GSD cannot describe them.
RasterImage resample(const RasterImage& img, std::size_t out_h, std::size_t out_w);

// Axis-aligned square crop at a seeded uniform-random offset; gsd is
// unchanged. Draw protocol: one Rng keyed by `seed`, row offset drawn
// before column offset, each via Rng::below(extent - size + 1).
RasterImage random_crop(const RasterImage& img, std::size_t size, std::uint64_t seed);

// Deterministic crop at a fixed offset (used by evaluation center crops).
RasterImage crop(const RasterImage& img, std::size_t oy, std::size_t ox,
                 std::size_t h, std::size_t w);

// Network input: the source crop shrunk to input_size^2. Requires square
// source with side a multiple of input_size.
RasterImage make_input(const RasterImage& hr, std::size_t input_size);

// low  = enlarge(shrink(hr, r_low), input_size)
// blur = enlarge(shrink(hr, r_high_low), hr side)
// high = hr - blur   (signed, unclipped)
BandpassTargets build_targets(const RasterImage& hr, std::size_t input_size,
                              std::size_t r_low, std::size_t r_high_low);

// The bicubic enlargement used by resample, exposed as an explicit linear
// map together with its exact adjoint (transpose), so losses that upsample
// a prediction can push gradients back through it. Requires out >= in on
// both axes; equal sizes degenerate to the identity.
Tensor enlarge_bicubic(const Tensor& x, std::size_t out_h, std::size_t out_w);
Tensor enlarge_bicubic_adjoint(const Tensor& dy, std::size_t in_h, std::size_t in_w);

} // namespace msmae

#endif
