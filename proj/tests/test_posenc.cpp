#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>

#include "msmae/posenc.hpp"
#include "msmae/rng.hpp"
#include "ref.hpp"

using msmae::PosEncConfig;

TEST_CASE("standard table matches a direct per-entry transcription of the formula") {
    PosEncConfig cfg;
    cfg.embed_dim = 8;
    auto got = msmae::standard_2d_sincos(3, cfg);
    auto want = msmae::ref::posenc_2d(3, 8, cfg.temperature, 1.0);
    REQUIRE(got.values.numel() == want.size());
    for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(got.values[i] == doctest::Approx(want[i]).epsilon(1e-13));
}

TEST_CASE("position zero encodes as alternating 0/1; lowest frequency is sin(pos)") {
    PosEncConfig cfg;
    cfg.embed_dim = 16;
    auto g = msmae::standard_2d_sincos(4, cfg);
    // token 0 = (y=0, x=0): every sine feature 0, every cosine feature 1
    for (std::size_t j = 0; j < cfg.embed_dim; j += 2) {
        CHECK(g.values.at(0, j) == 0.0);
        CHECK(g.values.at(0, j + 1) == 1.0);
    }
    // token 1 = (y=0, x=1): first x-feature is sin(1/temperature^0) = sin(1)
    CHECK(g.values.at(1, 0) == doctest::Approx(std::sin(1.0)).epsilon(1e-15));
    CHECK(g.values.at(1, 1) == doctest::Approx(std::cos(1.0)).epsilon(1e-15));
}

TEST_CASE("all entries lie in [-1,1] and each sin/cos pair is unit-norm") {
    PosEncConfig cfg;
    cfg.embed_dim = 24;
    msmae::Rng rng(77);
    for (int rep = 0; rep < 5; ++rep) {
        double gsd = 0.05 + rng.uniform() * 5.0;
        auto g = msmae::gsd_2d_sincos(5, gsd, cfg);
        for (std::size_t t = 0; t < g.values.dim(0); ++t)
            for (std::size_t j = 0; j < cfg.embed_dim; j += 2) {
                double s = g.values.at(t, j), c = g.values.at(t, j + 1);
                CHECK(s >= -1.0);
                CHECK(s <= 1.0);
                CHECK(std::fabs(s * s + c * c - 1.0) < 1e-12);
            }
    }
}

TEST_CASE("gsd at the reference value reduces to the standard table bit for bit") {
    msmae::Rng rng(78);
    for (int rep = 0; rep < 20; ++rep) {
        PosEncConfig cfg;
        cfg.embed_dim = 4 * (1 + rng.below(12));
        cfg.reference_gsd = 0.1 + rng.uniform() * 3.0;
        std::size_t side = 1 + rng.below(9);
        auto a = msmae::gsd_2d_sincos(side, cfg.reference_gsd, cfg);
        auto b = msmae::standard_2d_sincos(side, cfg);
        REQUIRE(a.values.numel() == b.values.numel());
        CHECK(std::memcmp(a.values.data(), b.values.data(),
                          a.values.numel() * sizeof(double)) == 0);
    }
}

TEST_CASE("doubling gsd equals evaluating the standard table at doubled positions") {
    PosEncConfig cfg;
    cfg.embed_dim = 12;
    std::size_t side = 4;
    auto scaled = msmae::gsd_2d_sincos(side, 2.0, cfg);
    auto wide = msmae::standard_2d_sincos(2 * side, cfg);
    // entry of the scaled grid at (y, x) == standard entry at (2y, 2x)
    for (std::size_t y = 0; y < side; ++y)
        for (std::size_t x = 0; x < side; ++x)
            for (std::size_t j = 0; j < cfg.embed_dim; ++j)
                CHECK(scaled.values.at(y * side + x, j) ==
                      doctest::Approx(wide.values.at((2 * y) * (2 * side) + 2 * x, j))
                          .epsilon(1e-12));
}

TEST_CASE("cross-scale ground alignment: coarse grid is a subsection of the fine grid") {
    // Grid A: side 8 at gsd g. Grid B: side 4 at gsd 2g, same ground extent.
    // B's token at pos p must encode like A's token at pos 2p.
    msmae::Rng rng(79);
    for (int rep = 0; rep < 10; ++rep) {
        PosEncConfig cfg;
        cfg.embed_dim = 4 * (1 + rng.below(10));
        double g = 0.05 + rng.uniform() * 2.0;
        auto fine = msmae::gsd_2d_sincos(8, g, cfg);
        auto coarse = msmae::gsd_2d_sincos(4, 2.0 * g, cfg);
        for (std::size_t y = 0; y < 4; ++y)
            for (std::size_t x = 0; x < 4; ++x)
                for (std::size_t j = 0; j < cfg.embed_dim; ++j) {
                    double want = fine.values.at((2 * y) * 8 + 2 * x, j);
                    double got = coarse.values.at(y * 4 + x, j);
                    CHECK(std::fabs(got - want) < 1e-9);
                }
    }
}

TEST_CASE("reciprocal orientation flips the scale factor") {
    PosEncConfig cfg;
    cfg.embed_dim = 8;
    cfg.orientation = msmae::GsdFactorOrientation::ReferenceOverGround;
    auto flipped = msmae::gsd_2d_sincos(3, 2.0, cfg);
    cfg.orientation = msmae::GsdFactorOrientation::GroundOverReference;
    auto halved = msmae::gsd_2d_sincos(3, 0.5, cfg);
    for (std::size_t i = 0; i < flipped.values.numel(); ++i)
        CHECK(flipped.values[i] == halved.values[i]);
}

TEST_CASE("validation rejects bad configurations") {
    PosEncConfig cfg;
    cfg.embed_dim = 6; // not a multiple of 4
    CHECK_THROWS_AS((void)msmae::standard_2d_sincos(3, cfg), std::invalid_argument);
    cfg.embed_dim = 8;
    CHECK_THROWS_AS((void)msmae::gsd_2d_sincos(3, 0.0, cfg), std::invalid_argument);
    CHECK_THROWS_AS((void)msmae::gsd_2d_sincos(3, -1.0, cfg), std::invalid_argument);
    cfg.temperature = 1.0;
    CHECK_THROWS_AS((void)msmae::standard_2d_sincos(3, cfg), std::invalid_argument);
    cfg.temperature = 10000.0;
    CHECK_THROWS_AS((void)msmae::standard_2d_sincos(0, cfg), std::invalid_argument);
}
