#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "msmae/pipeline.hpp"

namespace fs = std::filesystem;
using namespace msmae;

static fs::path test_root() {
    static fs::path root = [] {
        fs::path p = fs::temp_directory_path() / "msmae_pipeline_tests";
        fs::remove_all(p);
        fs::create_directories(p);
        return p;
    }();
    return root;
}

static std::string file_bytes(const fs::path& p) {
    std::ifstream in(p, std::ios::binary);
    REQUIRE(bool(in));
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

static TrainConfig micro_cfg() {
    TrainConfig cfg;
    cfg.hr_crop = 64;
    cfg.input_size = 32;
    cfg.r_low = 8;
    cfg.r_high_low = 16;
    cfg.mask_ratio = 0.75;
    cfg.batch_size = 4;
    cfg.epochs = 0;
    cfg.max_steps = 6;
    cfg.seed = 7;
    cfg.encoder.input_size = 32;
    cfg.encoder.patch_size = 8;
    cfg.encoder.embed_dim = 16;
    cfg.encoder.depth = 1;
    cfg.encoder.heads = 2;
    cfg.decoder.latent_dim = 16;
    cfg.decoder.decode_dim = 16;
    cfg.decoder.decode_depth = 1;
    cfg.decoder.heads = 2;
    cfg.decoder.token_grid_side = 4;
    cfg.decoder.low_out_size = 32;
    cfg.decoder.high_out_size = 64;
    cfg.decoder.fmb_per_block = 1;
    cfg.optim.warmup_steps = 2;
    cfg.optim.total_steps = 6;
    cfg.validate();
    return cfg;
}

// shared eight-scene dataset, built once
static const DatasetManifest& micro_data() {
    static DatasetManifest m = [] {
        SynthSpec spec;
        spec.n_scenes = 8;
        spec.base_size = 64;
        spec.classes = 2;
        spec.seed = 3;
        return synth_dataset((test_root() / "data8").string(), spec);
    }();
    return m;
}

TEST_CASE("manifest: round-trips paths, gsds, and missing labels") {
    fs::path dir = test_root() / "manifest_rt";
    fs::create_directories(dir);
    Tensor px({8, 8, 3});
    px.fill(0.5);
    save_png(RasterImage(px, 1.0), (dir / "a.png").string());
    save_png(RasterImage(px, 1.0), (dir / "b.png").string());

    DatasetManifest m;
    m.entries.push_back({"a.png", 0.625, 1});
    m.entries.push_back({"b.png", 1.0 / 3.0, -1});
    save_manifest(m, (dir / "manifest.csv").string());

    DatasetManifest back = load_manifest((dir / "manifest.csv").string());
    CHECK(back.name == "manifest_rt");
    REQUIRE(back.entries.size() == 2);
    CHECK(back.entries[0].path == "a.png");
    CHECK(back.entries[0].gsd == 0.625);
    CHECK(back.entries[0].label == 1);
    CHECK(back.entries[1].gsd == 1.0 / 3.0); // full precision survives the file
    CHECK(back.entries[1].label == -1);
    CHECK(back.resolve(0) == (dir / "a.png").string());
    CHECK(fs::exists(back.resolve(1)));
}

TEST_CASE("manifest: malformed input is rejected with the line number") {
    fs::path dir = test_root() / "manifest_bad";
    fs::create_directories(dir);
    Tensor px({4, 4, 3});
    save_png(RasterImage(px, 1.0), (dir / "ok.png").string());

    auto write = [&](const std::string& text) {
        std::ofstream f(dir / "m.csv", std::ios::binary);
        f << text;
    };
    auto load = [&] { return load_manifest((dir / "m.csv").string()); };

    write("path,gsd\nok.png,1.0,0\n");
    CHECK_THROWS_AS(load(), std::invalid_argument);
    write("path,gsd,label\nok.png,1.0\n");
    CHECK_THROWS_AS(load(), std::invalid_argument);
    write("path,gsd,label\nok.png,zero,0\n");
    CHECK_THROWS_AS(load(), std::invalid_argument);
    write("path,gsd,label\nok.png,-2.0,0\n");
    CHECK_THROWS_AS(load(), std::invalid_argument);
    write("path,gsd,label\nok.png,1.0,first\n");
    CHECK_THROWS_AS(load(), std::invalid_argument);
    write("path,gsd,label\nmissing.png,1.0,0\n");
    CHECK_THROWS_AS(load(), std::invalid_argument);
    write("path,gsd,label\n");
    CHECK_THROWS_AS(load(), std::invalid_argument);
    CHECK_THROWS_AS(load_manifest((dir / "nonexistent.csv").string()), std::invalid_argument);

    write("path,gsd,label\r\nok.png,1.5,2\r\n"); // CRLF tolerated
    DatasetManifest m = load();
    REQUIRE(m.entries.size() == 1);
    CHECK(m.entries[0].gsd == 1.5);
    CHECK(m.entries[0].label == 2);
}

TEST_CASE("synth: same spec writes identical bytes, labels cycle, gsds in range") {
    SynthSpec spec;
    spec.n_scenes = 4;
    spec.base_size = 48;
    spec.classes = 2;
    spec.seed = 11;
    DatasetManifest a = synth_dataset((test_root() / "det_a").string(), spec);
    DatasetManifest b = synth_dataset((test_root() / "det_b").string(), spec);

    REQUIRE(a.entries.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(a.entries[i].label == int(i % 2));
        CHECK(a.entries[i].gsd >= spec.gsd_min);
        CHECK(a.entries[i].gsd <= spec.gsd_max);
        CHECK(file_bytes(a.resolve(i)) == file_bytes(b.resolve(i)));
    }
    CHECK(file_bytes(test_root() / "det_a" / "manifest.csv") ==
          file_bytes(test_root() / "det_b" / "manifest.csv"));

    // a different seed must not reproduce the same pixels
    spec.seed = 12;
    DatasetManifest c = synth_dataset((test_root() / "det_c").string(), spec);
    CHECK(file_bytes(a.resolve(0)) != file_bytes(c.resolve(0)));

    CHECK_THROWS_AS(synth_dataset((test_root() / "det_x").string(), SynthSpec{0}),
                    std::invalid_argument);
    SynthSpec tiny;
    tiny.base_size = 16;
    CHECK_THROWS_AS(synth_dataset((test_root() / "det_x").string(), tiny),
                    std::invalid_argument);
    SynthSpec badg;
    badg.gsd_min = 2.0;
    badg.gsd_max = 1.0;
    CHECK_THROWS_AS(synth_dataset((test_root() / "det_x").string(), badg),
                    std::invalid_argument);
}

// mean absolute forward difference of the gray image: the clutter class
// has to carry far more edge mass than the smooth one
static double edge_density(const Tensor& px) {
    std::size_t h = px.dim(0), w = px.dim(1);
    double acc = 0.0;
    std::size_t n = 0;
    for (std::size_t y = 0; y + 1 < h; ++y)
        for (std::size_t x = 0; x + 1 < w; ++x) {
            double g = (px.at(y, x, 0) + px.at(y, x, 1) + px.at(y, x, 2)) / 3.0;
            double gx = (px.at(y, x + 1, 0) + px.at(y, x + 1, 1) + px.at(y, x + 1, 2)) / 3.0 - g;
            double gy = (px.at(y + 1, x, 0) + px.at(y + 1, x, 1) + px.at(y + 1, x, 2)) / 3.0 - g;
            acc += std::fabs(gx) + std::fabs(gy);
            ++n;
        }
    return acc / double(n);
}

TEST_CASE("synth: the two classes separate on a plain edge-density statistic") {
    const DatasetManifest& m = micro_data();
    double mean[2] = {0.0, 0.0};
    std::size_t count[2] = {0, 0};
    for (std::size_t i = 0; i < m.entries.size(); ++i) {
        RasterImage img = load_png(m.resolve(i), m.entries[i].gsd);
        int l = m.entries[i].label;
        REQUIRE((l == 0 || l == 1));
        mean[l] += edge_density(img.pixels);
        ++count[l];
    }
    mean[0] /= double(count[0]);
    mean[1] /= double(count[1]);
    CHECK(mean[1] > 2.0 * mean[0]);
}

static std::size_t linear_n(std::size_t din, std::size_t dout) { return din * dout + dout; }
static std::size_t block_n(std::size_t d, double ratio) {
    std::size_t hidden = std::size_t(ratio * double(d));
    std::size_t attn = d * 3 * d + 3 * d + d * d + d;
    std::size_t mlp = d * hidden + hidden + hidden * d + d;
    return 2 * (2 * d) + attn + mlp;
}

TEST_CASE("param accounting: analytic counts equal a real allocation") {
    TrainConfig cfg = micro_cfg();
    ParamReport r = count_params(cfg.encoder, cfg.decoder);
    CHECK(r.total == r.encoder + r.decoder);

    Model model(cfg);
    CHECK(model.store.total_params() == r.total);

    // every name the store holds is claimed by exactly one of the prefixes
    std::size_t enc_live = 0, dec_live = 0;
    for (const auto& [name, p] : model.store.entries()) {
        if (name.rfind("enc.", 0) == 0) enc_live += p.value.numel();
        if (name.rfind("dec.", 0) == 0) dec_live += p.value.numel();
    }
    CHECK(enc_live == r.encoder);
    CHECK(dec_live == r.decoder);

    // the conventional decoder it is compared against, from first principles
    std::size_t van = linear_n(cfg.decoder.latent_dim, cfg.decoder.decode_dim) +
                      cfg.decoder.decode_dim +
                      8 * block_n(cfg.decoder.decode_dim, cfg.decoder.mlp_ratio) +
                      2 * cfg.decoder.decode_dim +
                      linear_n(cfg.decoder.decode_dim, cfg.encoder.patch_len());
    CHECK(r.vanilla_decoder == van);
    CHECK(r.vanilla_total == r.encoder + van);
}

TEST_CASE("param accounting: the pyramid decoder undercuts the 8-block baseline") {
    TrainConfig big = preset_config("vit-large");
    ParamReport r = count_params(big.encoder, big.decoder);
    CHECK(r.decoder < r.vanilla_decoder);
    CHECK(r.total < r.vanilla_total);
    // and the full model still counts consistently
    CHECK(r.total == r.encoder + r.decoder);
}

TEST_CASE("trainer: same seed replays the same loss curve, another seed departs") {
    TrainConfig cfg = micro_cfg();
    cfg.max_steps = 3;
    Trainer t1(cfg, micro_data());
    Trainer t2(cfg, micro_data());
    CHECK(t1.steps_per_epoch() == 2);
    CHECK(t1.steps_planned() == 3);

    std::vector<StepLog> a, b;
    while (!t1.done()) a.push_back(t1.step());
    while (!t2.done()) b.push_back(t2.step());
    REQUIRE(a.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(a[i].step == i + 1);
        CHECK(a[i].terms.total == b[i].terms.total);
        CHECK(a[i].terms.low == b[i].terms.low);
        CHECK(a[i].terms.high == b[i].terms.high);
        CHECK(a[i].lr == b[i].lr);
        CHECK(std::isfinite(a[i].terms.total));
    }
    CHECK_THROWS_AS(t1.step(), std::logic_error);

    cfg.seed = 8;
    Trainer t3(cfg, micro_data());
    CHECK(t3.step().terms.total != a[0].terms.total);
}

TEST_CASE("trainer: flip augmentation stays deterministic and changes the curve") {
    TrainConfig cfg = micro_cfg();
    cfg.max_steps = 2;
    cfg.hflip = true;
    Trainer f1(cfg, micro_data());
    Trainer f2(cfg, micro_data());
    StepLog a1 = f1.step(), a2 = f2.step();
    CHECK(a1.terms.total == a2.terms.total);

    cfg.hflip = false;
    Trainer plain(cfg, micro_data());
    CHECK(plain.step().terms.total != a1.terms.total);
}

TEST_CASE("trainer: zero learning rate leaves every parameter untouched") {
    TrainConfig cfg = micro_cfg();
    cfg.optim.learning_rate = 0.0;
    Trainer t(cfg, micro_data());
    std::vector<double> before;
    for (const auto& [name, p] : t.model().store.entries())
        for (std::size_t i = 0; i < p.value.numel(); ++i) before.push_back(p.value[i]);
    t.step();
    std::size_t k = 0;
    bool same = true;
    for (const auto& [name, p] : t.model().store.entries())
        for (std::size_t i = 0; i < p.value.numel(); ++i) same &= (p.value[i] == before[k++]);
    CHECK(same);
}

TEST_CASE("trainer: undersized inputs are refused up front") {
    TrainConfig cfg = micro_cfg();
    cfg.batch_size = 16; // dataset holds 8
    CHECK_THROWS_AS(Trainer(cfg, micro_data()), std::invalid_argument);

    TrainConfig wide = micro_cfg();
    wide.hr_crop = 128; // scenes are 64px
    wide.r_high_low = 32;
    wide.decoder.high_out_size = 128;
    wide.validate();
    CHECK_THROWS_AS(Trainer(wide, micro_data()), std::invalid_argument);

    DatasetManifest empty;
    CHECK_THROWS_AS(Trainer(micro_cfg(), empty), std::invalid_argument);
}

TEST_CASE("checkpoint: save, reload, save again is byte-identical") {
    TrainConfig cfg = micro_cfg();
    Trainer t(cfg, micro_data());
    for (int i = 0; i < 2; ++i) t.step();

    fs::path ck = test_root() / "state.ckpt";
    t.save(ck.string());
    std::string first = file_bytes(ck);

    TrainConfig peeked = peek_checkpoint_config(ck.string());
    CHECK(config_to_json(peeked) == config_to_json(cfg));

    Trainer r(ck.string(), micro_data());
    CHECK(r.steps_done() == 2);
    fs::path ck2 = test_root() / "state2.ckpt";
    r.save(ck2.string());
    CHECK(file_bytes(ck2) == first);
    CHECK(!fs::exists(test_root() / "state2.ckpt.tmp")); // atomic write cleaned up
}

TEST_CASE("checkpoint: damage is detected before any state is touched") {
    TrainConfig cfg = micro_cfg();
    Trainer t(cfg, micro_data());
    t.step();
    fs::path ck = test_root() / "damage.ckpt";
    t.save(ck.string());
    std::string good = file_bytes(ck);

    auto rewrite = [&](std::string bytes) {
        std::ofstream f(ck, std::ios::binary | std::ios::trunc);
        f << bytes;
    };
    auto expect_throw = [&](const char* needle) {
        try {
            peek_checkpoint_config(ck.string());
            FAIL("expected a checkpoint error");
        } catch (const std::runtime_error& e) {
            CHECK(std::string(e.what()).find(needle) != std::string::npos);
        }
    };

    std::string bad = good;
    bad[bad.size() / 2] ^= 0x01; // flip one payload bit
    rewrite(bad);
    expect_throw("checksum");

    bad = good;
    bad[4] ^= 0xFF; // version field
    rewrite(bad);
    expect_throw("version");

    bad = good;
    bad[0] = 'X';
    rewrite(bad);
    expect_throw("not a checkpoint");

    rewrite(good.substr(0, good.size() - 9));
    CHECK_THROWS_AS(peek_checkpoint_config(ck.string()), std::runtime_error);

    // the intact file still loads fine afterwards
    rewrite(good);
    Trainer r(ck.string(), micro_data());
    CHECK(r.steps_done() == 1);
}

TEST_CASE("checkpoint: a resumed run continues the exact loss log") {
    TrainConfig cfg = micro_cfg(); // 6 steps planned
    Trainer full(cfg, micro_data());
    std::vector<StepLog> want;
    while (!full.done()) want.push_back(full.step());
    REQUIRE(want.size() == 6);

    Trainer head(cfg, micro_data());
    for (int i = 0; i < 3; ++i) head.step();
    fs::path ck = test_root() / "resume.ckpt";
    head.save(ck.string());

    Trainer tail(ck.string(), micro_data());
    CHECK(tail.steps_done() == 3);
    CHECK(tail.steps_planned() == 6);
    std::vector<StepLog> got;
    while (!tail.done()) got.push_back(tail.step());
    REQUIRE(got.size() == 3);
    for (std::size_t i = 0; i < 3; ++i) {
        CHECK(got[i].step == want[3 + i].step);
        CHECK(got[i].terms.total == want[3 + i].terms.total); // bitwise, no tolerance
        CHECK(got[i].terms.low == want[3 + i].terms.low);
        CHECK(got[i].terms.high == want[3 + i].terms.high);
        CHECK(got[i].lr == want[3 + i].lr);
    }

    // and the final states agree too
    fs::path a = test_root() / "final_a.ckpt";
    fs::path b = test_root() / "final_b.ckpt";
    full.save(a.string());
    tail.save(b.string());
    CHECK(file_bytes(a) == file_bytes(b));
}
