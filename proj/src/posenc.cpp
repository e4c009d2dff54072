#include "msmae/posenc.hpp"

#include <cmath>
#include <stdexcept>

namespace msmae {

namespace {

void validate(std::size_t grid_side, const PosEncConfig& cfg) {
    if (grid_side < 1) throw std::invalid_argument("posenc: grid_side must be >= 1");
    if (cfg.embed_dim == 0 || cfg.embed_dim % 4 != 0)
        throw std::invalid_argument("posenc: embed_dim must be a positive multiple of 4");
    if (!(cfg.temperature > 1.0))
        throw std::invalid_argument("posenc: temperature must exceed 1");
    if (!(cfg.reference_gsd > 0.0))
        throw std::invalid_argument("posenc: reference_gsd must be positive");
}

// The evaluation order below is deliberate and load-bearing: the position
// is multiplied by the scale factor first, then divided by the frequency
// divisor. With scale == 1.0 the multiplication is an IEEE identity, which
// is what makes the gsd == reference_gsd case reduce to the standard table
// bit for bit.
Tensor sincos_table(std::size_t grid_side, std::size_t dim, double temperature, double scale) {
    std::size_t n = grid_side * grid_side;
    std::size_t half = dim / 2;
    std::size_t pairs = dim / 4;
    Tensor table({n, dim});
    std::vector<double> div(pairs);
    for (std::size_t i = 0; i < pairs; ++i)
        div[i] = std::pow(temperature, 2.0 * double(i) / double(dim));
#pragma omp parallel for schedule(static)
    for (std::int64_t t = 0; t < std::int64_t(n); ++t) {
        std::size_t y = std::size_t(t) / grid_side;
        std::size_t x = std::size_t(t) % grid_side;
        double sx = double(x) * scale;
        double sy = double(y) * scale;
        double* row = table.data() + std::size_t(t) * dim;
        for (std::size_t i = 0; i < pairs; ++i) {
            double ax = sx / div[i];
            double ay = sy / div[i];
            row[2 * i] = std::sin(ax);
            row[2 * i + 1] = std::cos(ax);
            row[half + 2 * i] = std::sin(ay);
            row[half + 2 * i + 1] = std::cos(ay);
        }
    }
    return table;
}

} // namespace

PositionalGrid standard_2d_sincos(std::size_t grid_side, const PosEncConfig& cfg) {
    validate(grid_side, cfg);
    PositionalGrid g;
    g.values = sincos_table(grid_side, cfg.embed_dim, cfg.temperature, 1.0);
    g.grid_side = grid_side;
    g.gsd_scaled = false;
    g.gsd_used = 0.0;
    return g;
}

PositionalGrid gsd_2d_sincos(std::size_t grid_side, double gsd, const PosEncConfig& cfg) {
    validate(grid_side, cfg);
    if (!(gsd > 0.0)) throw std::invalid_argument("posenc: gsd must be positive");
    double scale = cfg.orientation == GsdFactorOrientation::GroundOverReference
                       ? gsd / cfg.reference_gsd
                       : cfg.reference_gsd / gsd;
    PositionalGrid g;
    g.values = sincos_table(grid_side, cfg.embed_dim, cfg.temperature, scale);
    g.grid_side = grid_side;
    g.gsd_scaled = true;
    g.gsd_used = gsd;
    return g;
}

} // namespace msmae
