#ifndef MSMAE_CONFIG_HPP
#define MSMAE_CONFIG_HPP

#include <string>
#include <vector>

#include <json.hpp>

#include "msmae/decoder.hpp"
#include "msmae/encoder.hpp"
#include "msmae/objective.hpp"
#include "msmae/optim.hpp"

namespace msmae {

// Everything a pretraining run needs. The band geometry couples the
// sub-configs: the decoder's low band is scored against input_size-sized
// targets and its high band against hr_crop-sized ones, so validate()
// insists the sizes line up rather than letting shapes explode later.
struct TrainConfig {
    std::size_t hr_crop = 448;    // source crop side fed to target building
    std::size_t input_size = 224; // network input side
    std::size_t r_low = 14;       // low band passes through this size
    std::size_t r_high_low = 56;  // high band removes what survives this size
    double mask_ratio = 0.75;
    bool hflip = false; // horizontal-flip augmentation on the source crop
    std::size_t epochs = 1;
    std::size_t batch_size = 8;
    std::size_t max_steps = 0; // 0: bounded by epochs
    std::uint64_t seed = 0;
    EncoderConfig encoder;
    DecoderConfig decoder;
    LossConfig loss;
    OptimConfig optim;

    void validate() const;
};

// JSON round-trip. Reading starts from defaults, accepts partial objects,
// and rejects unknown keys by listing the valid ones.
nlohmann::json config_to_json(const TrainConfig& cfg);
TrainConfig config_from_json(const nlohmann::json& j);
TrainConfig load_train_config(const std::string& path);
void save_train_config(const TrainConfig& cfg, const std::string& path);

// Named baseline configurations: "toy", "vit-base", "vit-large".
TrainConfig preset_config(const std::string& name);
std::vector<std::string> preset_names();

// Dotted-path leaf keys of the config schema ("encoder.depth", ...),
// derived from the serialized tree so they can never go stale.
std::vector<std::string> config_keys();

// Apply "dotted.path=value" overrides onto a serialized config tree.
// Unknown paths or malformed pairs throw with the valid keys listed.
void apply_overrides(nlohmann::json& tree, const std::vector<std::string>& overrides);

} // namespace msmae

#endif
