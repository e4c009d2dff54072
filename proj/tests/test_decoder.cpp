#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cmath>

#include "msmae/decoder.hpp"
#include "msmae/rng.hpp"
#include "ref.hpp"

using msmae::DecoderConfig;
using msmae::LaplacianBranch;
using msmae::MaskPlan;
using msmae::ParamStore;
using msmae::Tensor;

static Tensor rand_tensor(std::vector<std::size_t> shape, std::uint64_t key) {
    Tensor t(std::move(shape));
    msmae::Rng rng(key);
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform() * 2.0 - 1.0;
    return t;
}

static DecoderConfig tiny_config() {
    DecoderConfig cfg;
    cfg.latent_dim = 6;
    cfg.decode_dim = 8;
    cfg.decode_depth = 1;
    cfg.heads = 2;
    cfg.mlp_ratio = 2.0;
    cfg.token_grid_side = 2;
    cfg.low_out_size = 16;
    cfg.high_out_size = 32;
    cfg.out_channels = 1;
    cfg.fmb_per_block = 1;
    return cfg;
}

TEST_CASE("each branch reads the largest enlarged map its target can use") {
    // 16x the grid (fixed x4 tail on the x4 map) is the cutover point.
    CHECK(msmae::branch_reads_x4(14, 224));  // 224 == 16*14
    CHECK(msmae::branch_reads_x4(14, 448));
    CHECK_FALSE(msmae::branch_reads_x4(14, 112));
    CHECK_FALSE(msmae::branch_reads_x4(8, 64)); // 64 < 128 -> x2 map
    CHECK(msmae::branch_reads_x4(8, 128));
    CHECK(msmae::branch_reads_x4(2, 32));
    CHECK_FALSE(msmae::branch_reads_x4(2, 16));
}

TEST_CASE("laplacian branch: stage counts, output sides, impossible targets") {
    ParamStore store(51);
    LaplacianBranch b0(store, "b0", 4, 3, 56, 224, 2);
    CHECK(b0.upsample_stages() == 0); // 4*56 == 224 already
    auto fm = rand_tensor({56, 56, 4}, 52);
    auto out = b0.forward(fm);
    REQUIRE(out.ndim() == 3);
    CHECK(out.dim(0) == 224);
    CHECK(out.dim(1) == 224);
    CHECK(out.dim(2) == 3);

    LaplacianBranch b1(store, "b1", 4, 3, 56, 448, 2);
    CHECK(b1.upsample_stages() == 1); // one doubling, then the x4 tail
    auto out1 = b1.forward(fm);
    CHECK(out1.dim(0) == 448);
    CHECK(out1.dim(2) == 3);

    // Wrong input side is rejected.
    auto bad = rand_tensor({28, 28, 4}, 53);
    CHECK_THROWS_AS((void)b0.forward(bad), std::invalid_argument);

    // Targets that are not 4 * 2^k times the map side cannot be built.
    CHECK_THROWS_AS((LaplacianBranch(store, "e0", 4, 3, 56, 112, 2)), std::invalid_argument);
    CHECK_THROWS_AS((LaplacianBranch(store, "e1", 4, 3, 56, 300, 2)), std::invalid_argument);
    CHECK_THROWS_AS((LaplacianBranch(store, "e2", 4, 3, 16, 96, 2)), std::invalid_argument);
}

TEST_CASE("upsample stage turns the token grid into x2 and x4 maps") {
    DecoderConfig cfg = tiny_config();
    cfg.token_grid_side = 14;
    cfg.low_out_size = 224;
    cfg.high_out_size = 448;
    ParamStore store(55);
    msmae::Decoder dec(store, cfg);
    CHECK(dec.low_uses_x4());
    CHECK(dec.high_uses_x4());

    auto tokens = rand_tensor({cfg.n_patches(), cfg.decode_dim}, 56);
    auto [map2, map4] = dec.upsample_stage(tokens);
    CHECK(map2.dim(0) == 28);
    CHECK(map2.dim(1) == 28);
    CHECK(map2.dim(2) == cfg.decode_dim);
    CHECK(map4.dim(0) == 56);
    CHECK(map4.dim(1) == 56);
    CHECK(map4.dim(2) == cfg.decode_dim);

    // Zeroed first deconvolution leaves only its bias in the x2 map.
    store.at("dec.up_a.w").value.fill(0.0);
    store.at("dec.up_a.b").value.fill(0.25);
    auto [flat2, flat4] = dec.upsample_stage(tokens);
    for (std::size_t i = 0; i < flat2.numel(); ++i) CHECK(flat2[i] == 0.25);
    CHECK(flat4.dim(0) == 56);

    Tensor wrong({cfg.n_patches() + 1, cfg.decode_dim});
    CHECK_THROWS_AS((void)dec.upsample_stage(wrong), std::invalid_argument);
}

TEST_CASE("depth-zero token decode is scatter plus positional rows, class row dropped") {
    DecoderConfig cfg = tiny_config();
    cfg.decode_depth = 0;
    cfg.token_grid_side = 4;
    cfg.low_out_size = 32;
    cfg.high_out_size = 64;
    ParamStore store(57);
    msmae::Decoder dec(store, cfg);

    store.at("dec.embed.w").value.fill(0.0);
    auto& b = store.at("dec.embed.b").value;
    msmae::Rng rng(58);
    for (std::size_t i = 0; i < b.numel(); ++i) b[i] = rng.uniform() - 0.5;
    auto& mtok = store.at("dec.mask_token").value;

    auto plan = msmae::sample_mask(cfg.n_patches(), 0.5, 59);
    double gsd = 1.7;
    auto latents = rand_tensor({1 + plan.visible_idx.size(), cfg.latent_dim}, 60);
    auto out = dec.decode_tokens(latents, plan, gsd);
    REQUIRE(out.dim(0) == cfg.n_patches());
    REQUIRE(out.dim(1) == cfg.decode_dim);

    auto grid = msmae::gsd_2d_sincos(cfg.token_grid_side, gsd, cfg.posenc());
    std::vector<bool> visible(cfg.n_patches(), false);
    for (std::size_t v : plan.visible_idx) visible[v] = true;
    for (std::size_t i = 0; i < cfg.n_patches(); ++i)
        for (std::size_t j = 0; j < cfg.decode_dim; ++j) {
            double base = visible[i] ? b[j] : mtok[j];
            CHECK(out.at(i, j) == base + grid.values.at(i, j));
        }
}

TEST_CASE("an all-visible plan leaves no trace of the mask token") {
    DecoderConfig cfg = tiny_config();
    cfg.decode_depth = 0;
    ParamStore store(61);
    msmae::Decoder dec(store, cfg);
    store.at("dec.mask_token").value.fill(1e6);
    store.at("dec.embed.w").value.fill(0.0);
    store.at("dec.embed.b").value.fill(0.0);

    auto plan = MaskPlan::all_visible(cfg.n_patches());
    auto latents = rand_tensor({1 + cfg.n_patches(), cfg.latent_dim}, 62);
    auto out = dec.decode_tokens(latents, plan, 1.0);
    for (std::size_t i = 0; i < out.numel(); ++i) CHECK(std::fabs(out[i]) < 1e5);
}

TEST_CASE("single-block token decode matches the scalar transformer reference") {
    DecoderConfig cfg = tiny_config();
    cfg.use_gsd_posenc = false;
    ParamStore store(63);
    msmae::Decoder dec(store, cfg);

    auto plan = msmae::sample_mask(cfg.n_patches(), 0.5, 64);
    std::size_t nv = plan.visible_idx.size(), n = cfg.n_patches(), dd = cfg.decode_dim;
    auto latents = rand_tensor({1 + nv, cfg.latent_dim}, 65);
    auto got = dec.decode_tokens(latents, plan, 0.0);

    // Reference: project, scatter, add positions, scalar block, final norm.
    auto& w = store.at("dec.embed.w").value;
    auto& b = store.at("dec.embed.b").value;
    std::vector<double> proj((1 + nv) * dd);
    msmae::ref::linear(latents.data(), w.data(), b.data(), proj.data(), 1 + nv, cfg.latent_dim,
                       dd);
    auto& mtok = store.at("dec.mask_token").value;
    auto grid = msmae::standard_2d_sincos(cfg.token_grid_side, cfg.posenc());
    std::vector<double> x((1 + n) * dd);
    std::copy_n(proj.data(), dd, x.data()); // class row, no positional term
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dd; ++j) x[(1 + i) * dd + j] = mtok[j] + grid.values.at(i, j);
    for (std::size_t k = 0; k < nv; ++k) {
        std::size_t at = plan.visible_idx[k];
        for (std::size_t j = 0; j < dd; ++j)
            x[(1 + at) * dd + j] = proj[(1 + k) * dd + j] + grid.values.at(at, j);
    }
    msmae::ref::BlockWeights wts{
        store.at("dec.block0.norm1.gamma").value.data(),
        store.at("dec.block0.norm1.beta").value.data(),
        store.at("dec.block0.attn.qkv.w").value.data(),
        store.at("dec.block0.attn.qkv.b").value.data(),
        store.at("dec.block0.attn.proj.w").value.data(),
        store.at("dec.block0.attn.proj.b").value.data(),
        store.at("dec.block0.norm2.gamma").value.data(),
        store.at("dec.block0.norm2.beta").value.data(),
        store.at("dec.block0.mlp.fc1.w").value.data(),
        store.at("dec.block0.mlp.fc1.b").value.data(),
        store.at("dec.block0.mlp.fc2.w").value.data(),
        store.at("dec.block0.mlp.fc2.b").value.data()};
    std::vector<double> blocked((1 + n) * dd), normed((1 + n) * dd);
    msmae::ref::transformer_block(x.data(), blocked.data(), 1 + n, dd, cfg.heads,
                                  std::size_t(std::lround(dd * cfg.mlp_ratio)), wts, 1e-6);
    msmae::ref::layernorm(blocked.data(), store.at("dec.norm.gamma").value.data(),
                          store.at("dec.norm.beta").value.data(), normed.data(), 1 + n, dd, 1e-6);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < dd; ++j) {
            double want = normed[(1 + i) * dd + j];
            double denom = std::max({std::fabs(want), 1.0});
            CHECK(std::fabs(got.at(i, j) - want) / denom < 1e-9);
        }
}

TEST_CASE("decode_forward: band shapes, source maps, and carried gsd") {
    DecoderConfig cfg = tiny_config();
    cfg.token_grid_side = 8;
    cfg.low_out_size = 64;
    cfg.high_out_size = 128;
    cfg.out_channels = 2;
    ParamStore store(67);
    msmae::Decoder dec(store, cfg);
    CHECK_FALSE(dec.low_uses_x4()); // 64 < 16*8: the x2 map reaches it
    CHECK(dec.high_uses_x4());

    auto plan = msmae::sample_mask(cfg.n_patches(), 0.75, 68);
    auto latents = rand_tensor({1 + plan.visible_idx.size(), cfg.latent_dim}, 69);
    auto [low, high] = dec.decode_forward(latents, plan, 0.5);
    CHECK(low.pixels.dim(0) == 64);
    CHECK(low.pixels.dim(1) == 64);
    CHECK(low.pixels.dim(2) == 2);
    CHECK(high.pixels.dim(0) == 128);
    CHECK(high.pixels.dim(2) == 2);
    CHECK(low.gsd == 0.5);
    CHECK(high.gsd == 0.25); // same footprint, twice the pixels

    // Bit-identical on repeat; a fresh plan reuses the same decoder.
    auto [low2, high2] = dec.decode_forward(latents, plan, 0.5);
    CHECK(std::equal(low.pixels.data(), low.pixels.data() + low.pixels.numel(),
                     low2.pixels.data()));
    CHECK(std::equal(high.pixels.data(), high.pixels.data() + high.pixels.numel(),
                     high2.pixels.data()));
    auto plan2 = msmae::sample_mask(cfg.n_patches(), 0.5, 70);
    auto latents2 = rand_tensor({1 + plan2.visible_idx.size(), cfg.latent_dim}, 71);
    auto [low3, high3] = dec.decode_forward(latents2, plan2, 2.0);
    CHECK(low3.pixels.dim(0) == 64);
    CHECK(high3.gsd == 1.0);
}

TEST_CASE("geometry and input validation") {
    // Unreachable band target: the x2 map side 28 needs 4*28=112 <= target | 224.
    DecoderConfig cfg = tiny_config();
    cfg.token_grid_side = 14;
    cfg.low_out_size = 48;
    cfg.high_out_size = 448;
    CHECK_THROWS_AS(([&] { ParamStore s(1); msmae::Decoder d(s, cfg); }()),
                    std::invalid_argument);

    cfg = tiny_config();
    cfg.token_grid_side = 8;
    cfg.low_out_size = 96; // 96 / (4*16) is not a power of two
    cfg.high_out_size = 128;
    CHECK_THROWS_AS(([&] { ParamStore s(1); msmae::Decoder d(s, cfg); }()),
                    std::invalid_argument);

    cfg = tiny_config();
    cfg.decode_dim = 10; // positional features need a multiple of 4
    CHECK_THROWS_AS(([&] { ParamStore s(1); msmae::Decoder d(s, cfg); }()),
                    std::invalid_argument);

    cfg = tiny_config();
    cfg.heads = 3;
    CHECK_THROWS_AS(([&] { ParamStore s(1); msmae::Decoder d(s, cfg); }()),
                    std::invalid_argument);

    cfg = tiny_config();
    ParamStore store(73);
    msmae::Decoder dec(store, cfg);
    auto plan = msmae::sample_mask(cfg.n_patches(), 0.5, 74);
    auto latents = rand_tensor({1 + plan.visible_idx.size(), cfg.latent_dim}, 75);
    CHECK_THROWS_AS((void)dec.decode_tokens(latents, plan, 0.0), std::invalid_argument);
    CHECK_THROWS_AS((void)dec.decode_tokens(latents, plan, -1.0), std::invalid_argument);
    Tensor short_rows({plan.visible_idx.size(), cfg.latent_dim}); // class row missing
    CHECK_THROWS_AS((void)dec.decode_tokens(short_rows, plan, 1.0), std::invalid_argument);
    auto wide_plan = msmae::sample_mask(cfg.n_patches() * 4, 0.5, 76);
    auto wide_lat = rand_tensor({1 + wide_plan.visible_idx.size(), cfg.latent_dim}, 77);
    CHECK_THROWS_AS((void)dec.decode_tokens(wide_lat, wide_plan, 1.0), std::invalid_argument);
}

TEST_CASE("decoder gradients match finite differences on a tiny config") {
    DecoderConfig cfg = tiny_config(); // grid 2, low 16, high 32
    ParamStore store(79);
    msmae::Decoder dec(store, cfg);

    auto plan = msmae::sample_mask(cfg.n_patches(), 0.5, 80);
    auto latents = rand_tensor({1 + plan.visible_idx.size(), cfg.latent_dim}, 81);
    double gsd = 0.9;
    auto probe_low = rand_tensor({cfg.low_out_size, cfg.low_out_size, cfg.out_channels}, 82);
    auto probe_high = rand_tensor({cfg.high_out_size, cfg.high_out_size, cfg.out_channels}, 83);

    auto loss_for = [&] {
        auto [low, high] = dec.decode_forward(latents, plan, gsd);
        double s = 0.0;
        for (std::size_t i = 0; i < low.pixels.numel(); ++i) s += low.pixels[i] * probe_low[i];
        for (std::size_t i = 0; i < high.pixels.numel(); ++i) s += high.pixels[i] * probe_high[i];
        return s;
    };

    store.zero_grads();
    (void)dec.decode_forward(latents, plan, gsd);
    auto dlat = dec.decode_backward(probe_low, probe_high);
    REQUIRE(dlat.dim(0) == latents.dim(0));
    REQUIRE(dlat.dim(1) == cfg.latent_dim);

    double h = 1e-5;
    msmae::Rng pick(84);
    for (int rep = 0; rep < 6; ++rep) {
        std::size_t idx = pick.below(latents.numel());
        double orig = latents[idx];
        latents[idx] = orig + h;
        double fp = loss_for();
        latents[idx] = orig - h;
        double fm = loss_for();
        latents[idx] = orig;
        double fd = (fp - fm) / (2 * h);
        double diff = std::fabs(dlat[idx] - fd);
        CHECK(diff / std::max({std::fabs(fd), std::fabs(dlat[idx]), 1e-4}) < 1e-3);
    }

    // The mask token feeds every masked row; its gradient must be live.
    {
        auto& p = store.at("dec.mask_token");
        double live = 0.0;
        for (std::size_t j = 0; j < p.grad.numel(); ++j) live += std::fabs(p.grad[j]);
        CHECK(live > 0.0);
        for (std::size_t j = 0; j < std::min<std::size_t>(3, p.value.numel()); ++j) {
            double orig = p.value[j];
            p.value[j] = orig + h;
            double fp = loss_for();
            p.value[j] = orig - h;
            double fm = loss_for();
            p.value[j] = orig;
            double fd = (fp - fm) / (2 * h);
            double diff = std::fabs(p.grad[j] - fd);
            CHECK(diff / std::max({std::fabs(fd), std::fabs(p.grad[j]), 1e-4}) < 1e-3);
        }
    }

    std::vector<std::string> names;
    for (auto& [name, p] : store.entries()) names.push_back(name);
    for (int rep = 0; rep < 40; ++rep) {
        auto& name = names[pick.below(names.size())];
        auto& p = store.at(name);
        std::size_t idx = pick.below(p.value.numel());
        double orig = p.value[idx];
        p.value[idx] = orig + h;
        double fp = loss_for();
        p.value[idx] = orig - h;
        double fm = loss_for();
        p.value[idx] = orig;
        double fd = (fp - fm) / (2 * h);
        double diff = std::fabs(p.grad[idx] - fd);
        if (diff < 1e-7) continue; // structurally-zero gradient noise floor
        CHECK(diff / std::max({std::fabs(fd), std::fabs(p.grad[idx]), 1e-8}) < 1e-3);
    }
}
