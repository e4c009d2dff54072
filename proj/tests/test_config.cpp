#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <algorithm>
#include <cstdio>

#include "msmae/config.hpp"

using msmae::TrainConfig;
using nlohmann::json;

TEST_CASE("presets validate and serialization round-trips exactly") {
    for (const auto& name : msmae::preset_names()) {
        auto cfg = msmae::preset_config(name);
        cfg.validate();
        json j = msmae::config_to_json(cfg);
        auto back = msmae::config_from_json(j);
        CHECK(msmae::config_to_json(back).dump() == j.dump());
    }
    CHECK_THROWS_AS((void)msmae::preset_config("vit-huge"), std::invalid_argument);
}

TEST_CASE("partial config files fill in defaults; unknown keys are rejected") {
    json j{{"hr_crop", 896}, {"input_size", 448}};
    auto cfg = msmae::config_from_json(j);
    CHECK(cfg.hr_crop == 896);
    CHECK(cfg.input_size == 448);
    CHECK(cfg.r_low == 14);
    CHECK(cfg.encoder.depth == TrainConfig{}.encoder.depth);

    json bad{{"hr_cropp", 896}};
    CHECK_THROWS_AS((void)msmae::config_from_json(bad), std::invalid_argument);
    json bad_nested{{"encoder", {{"depht", 3}}}};
    CHECK_THROWS_AS((void)msmae::config_from_json(bad_nested), std::invalid_argument);
}

TEST_CASE("dotted overrides update leaves and reject junk") {
    auto cfg = msmae::preset_config("toy");
    json tree = msmae::config_to_json(cfg);
    msmae::apply_overrides(tree, {"encoder.depth=3", "mask_ratio=0.5",
                                  "loss.target_mode=low_only", "encoder.use_gsd_posenc=false",
                                  "seed=42"});
    auto out = msmae::config_from_json(tree);
    CHECK(out.encoder.depth == 3);
    CHECK(out.mask_ratio == 0.5);
    CHECK(out.loss.target_mode == msmae::TargetMode::LowOnly);
    CHECK(out.encoder.use_gsd_posenc == false);
    CHECK(out.seed == 42);

    auto throws_with_keys = [&](const std::string& ov) {
        json t = msmae::config_to_json(cfg);
        try {
            msmae::apply_overrides(t, {ov});
            return false;
        } catch (const std::invalid_argument& e) {
            return std::string(e.what()).find("valid keys") != std::string::npos;
        }
    };
    CHECK(throws_with_keys("encoder.banana=1"));
    CHECK(throws_with_keys("nonsense=1"));
    CHECK(throws_with_keys("encoder=1")); // section, not a leaf
    CHECK(throws_with_keys("encoder.depth")); // no '='

    json t = msmae::config_to_json(cfg);
    CHECK_THROWS_AS(msmae::apply_overrides(t, {"mask_ratio=abc"}), std::invalid_argument);
    CHECK_THROWS_AS(msmae::apply_overrides(t, {"encoder.use_gsd_posenc=7"}),
                    std::invalid_argument);
}

TEST_CASE("config key listing covers every leaf") {
    auto keys = msmae::config_keys();
    auto has = [&](const char* k) {
        return std::find(keys.begin(), keys.end(), k) != keys.end();
    };
    CHECK(has("hr_crop"));
    CHECK(has("encoder.depth"));
    CHECK(has("decoder.decode_dim"));
    CHECK(has("loss.target_mode"));
    CHECK(has("optim.learning_rate"));
    CHECK_FALSE(has("encoder")); // sections are not leaves
}

TEST_CASE("file round trip and consistency validation") {
    auto cfg = msmae::preset_config("toy");
    std::string path = "test_config_tmp.json";
    msmae::save_train_config(cfg, path);
    auto back = msmae::load_train_config(path);
    CHECK(msmae::config_to_json(back).dump() == msmae::config_to_json(cfg).dump());
    std::remove(path.c_str());
    CHECK_THROWS_AS((void)msmae::load_train_config("does_not_exist.json"),
                    std::invalid_argument);

    auto broken = cfg;
    broken.decoder.token_grid_side = 4; // no longer matches the encoder grid
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
    broken = cfg;
    broken.input_size = 63;
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
    broken = cfg;
    broken.decoder.low_out_size = 32;
    CHECK_THROWS_AS(broken.validate(), std::invalid_argument);
}
