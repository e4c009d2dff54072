#ifndef MSMAE_POSENC_HPP
#define MSMAE_POSENC_HPP

#include <cstddef>

#include "msmae/tensor.hpp"

namespace msmae {

// Which way the ground-sample-distance ratio is applied to positions.
// GroundOverReference scales positions by gsd/reference_gsd, so a coarser
// image (larger gsd) sweeps a longer stretch of the sinusoid — adjacent
// pixels are farther apart on the ground. ReferenceOverGround applies the
// reciprocal for comparison runs; the cross-scale alignment property holds
// only for the former.
enum class GsdFactorOrientation { GroundOverReference, ReferenceOverGround };

struct PosEncConfig {
    std::size_t embed_dim = 768;  // divisible by 4: two axes, sin/cos pairs
    double temperature = 10000.0; // frequency base, > 1
    double reference_gsd = 1.0;   // meters per pixel of the unit scale
    GsdFactorOrientation orientation = GsdFactorOrientation::GroundOverReference;
};

struct PositionalGrid {
    Tensor values;             // (grid_side^2, embed_dim), entries in [-1, 1]
    std::size_t grid_side = 0; // tokens are row-major over the grid
    bool gsd_scaled = false;
    double gsd_used = 0.0; // meaningful only when gsd_scaled
};

// Plain 2-D sine/cosine table. Token (y, x) gets the x-axis encoding in the
// first embed_dim/2 features and the y-axis encoding in the second half;
// within each half, frequency pair i occupies features (2i, 2i+1) as
// (sin, cos) of pos / temperature^(2i / embed_dim).
PositionalGrid standard_2d_sincos(std::size_t grid_side, const PosEncConfig& cfg);

// Same table with every axis position pre-multiplied by the GSD ratio, so
// phase is proportional to ground distance rather than pixel index. At
// gsd == reference_gsd this reproduces standard_2d_sincos bit for bit.
PositionalGrid gsd_2d_sincos(std::size_t grid_side, double gsd, const PosEncConfig& cfg);

} // namespace msmae

#endif
