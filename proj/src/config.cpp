#include "msmae/config.hpp"

#include <fstream>
#include <sstream>
#include <stdexcept>

namespace msmae {

using nlohmann::json;

namespace {

std::string orientation_name(GsdFactorOrientation o) {
    return o == GsdFactorOrientation::GroundOverReference ? "ground_over_reference"
                                                          : "reference_over_ground";
}

GsdFactorOrientation orientation_value(const std::string& s) {
    if (s == "ground_over_reference") return GsdFactorOrientation::GroundOverReference;
    if (s == "reference_over_ground") return GsdFactorOrientation::ReferenceOverGround;
    throw std::invalid_argument("config: unknown gsd factor orientation '" + s + "'");
}

std::string mode_name(TargetMode m) {
    switch (m) {
    case TargetMode::Dual: return "dual";
    case TargetMode::LowOnly: return "low_only";
    case TargetMode::HighOnly: return "high_only";
    case TargetMode::Combined: return "combined";
    }
    return "dual";
}

TargetMode mode_value(const std::string& s) {
    if (s == "dual") return TargetMode::Dual;
    if (s == "low_only") return TargetMode::LowOnly;
    if (s == "high_only") return TargetMode::HighOnly;
    if (s == "combined") return TargetMode::Combined;
    throw std::invalid_argument("config: unknown target mode '" + s + "'");
}

json encoder_to_json(const EncoderConfig& c) {
    return json{{"input_size", c.input_size},
                {"patch_size", c.patch_size},
                {"in_channels", c.in_channels},
                {"embed_dim", c.embed_dim},
                {"depth", c.depth},
                {"heads", c.heads},
                {"mlp_ratio", c.mlp_ratio},
                {"use_gsd_posenc", c.use_gsd_posenc},
                {"use_class_token", c.use_class_token},
                {"posenc_temperature", c.posenc_temperature},
                {"reference_gsd", c.reference_gsd},
                {"orientation", orientation_name(c.orientation)}};
}

json decoder_to_json(const DecoderConfig& c) {
    return json{{"latent_dim", c.latent_dim},
                {"decode_dim", c.decode_dim},
                {"decode_depth", c.decode_depth},
                {"heads", c.heads},
                {"mlp_ratio", c.mlp_ratio},
                {"token_grid_side", c.token_grid_side},
                {"low_out_size", c.low_out_size},
                {"high_out_size", c.high_out_size},
                {"out_channels", c.out_channels},
                {"fmb_per_block", c.fmb_per_block},
                {"has_class_token", c.has_class_token},
                {"use_gsd_posenc", c.use_gsd_posenc},
                {"posenc_temperature", c.posenc_temperature},
                {"reference_gsd", c.reference_gsd},
                {"orientation", orientation_name(c.orientation)}};
}

json loss_to_json(const LossConfig& c) {
    return json{{"low_weight", c.low_weight},
                {"high_weight", c.high_weight},
                {"target_mode", mode_name(c.target_mode)},
                {"masked_only_low", c.masked_only_low}};
}

json optim_to_json(const OptimConfig& c) {
    return json{{"learning_rate", c.learning_rate}, {"beta1", c.beta1},
                {"beta2", c.beta2},                 {"eps", c.eps},
                {"weight_decay", c.weight_decay},   {"warmup_steps", c.warmup_steps},
                {"total_steps", c.total_steps}};
}

// Overwrite fields present in j, reject keys that exist nowhere in the
// schema object `allowed`.
void check_keys(const json& j, const json& allowed, const std::string& scope) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!allowed.contains(it.key()))
            throw std::invalid_argument("config: unknown key '" + scope + it.key() + "'");
}

template <class T>
void read_field(const json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

EncoderConfig encoder_from_json(const json& j, EncoderConfig c) {
    check_keys(j, encoder_to_json(c), "encoder.");
    read_field(j, "input_size", c.input_size);
    read_field(j, "patch_size", c.patch_size);
    read_field(j, "in_channels", c.in_channels);
    read_field(j, "embed_dim", c.embed_dim);
    read_field(j, "depth", c.depth);
    read_field(j, "heads", c.heads);
    read_field(j, "mlp_ratio", c.mlp_ratio);
    read_field(j, "use_gsd_posenc", c.use_gsd_posenc);
    read_field(j, "use_class_token", c.use_class_token);
    read_field(j, "posenc_temperature", c.posenc_temperature);
    read_field(j, "reference_gsd", c.reference_gsd);
    if (j.contains("orientation")) c.orientation = orientation_value(j.at("orientation"));
    return c;
}

DecoderConfig decoder_from_json(const json& j, DecoderConfig c) {
    check_keys(j, decoder_to_json(c), "decoder.");
    read_field(j, "latent_dim", c.latent_dim);
    read_field(j, "decode_dim", c.decode_dim);
    read_field(j, "decode_depth", c.decode_depth);
    read_field(j, "heads", c.heads);
    read_field(j, "mlp_ratio", c.mlp_ratio);
    read_field(j, "token_grid_side", c.token_grid_side);
    read_field(j, "low_out_size", c.low_out_size);
    read_field(j, "high_out_size", c.high_out_size);
    read_field(j, "out_channels", c.out_channels);
    read_field(j, "fmb_per_block", c.fmb_per_block);
    read_field(j, "has_class_token", c.has_class_token);
    read_field(j, "use_gsd_posenc", c.use_gsd_posenc);
    read_field(j, "posenc_temperature", c.posenc_temperature);
    read_field(j, "reference_gsd", c.reference_gsd);
    if (j.contains("orientation")) c.orientation = orientation_value(j.at("orientation"));
    return c;
}

LossConfig loss_from_json(const json& j, LossConfig c) {
    check_keys(j, loss_to_json(c), "loss.");
    read_field(j, "low_weight", c.low_weight);
    read_field(j, "high_weight", c.high_weight);
    read_field(j, "masked_only_low", c.masked_only_low);
    if (j.contains("target_mode")) c.target_mode = mode_value(j.at("target_mode"));
    return c;
}

OptimConfig optim_from_json(const json& j, OptimConfig c) {
    check_keys(j, optim_to_json(c), "optim.");
    read_field(j, "learning_rate", c.learning_rate);
    read_field(j, "beta1", c.beta1);
    read_field(j, "beta2", c.beta2);
    read_field(j, "eps", c.eps);
    read_field(j, "weight_decay", c.weight_decay);
    read_field(j, "warmup_steps", c.warmup_steps);
    read_field(j, "total_steps", c.total_steps);
    return c;
}

void collect_keys(const json& node, const std::string& prefix, std::vector<std::string>& out) {
    for (auto it = node.begin(); it != node.end(); ++it) {
        if (it.value().is_object())
            collect_keys(it.value(), prefix + it.key() + ".", out);
        else
            out.push_back(prefix + it.key());
    }
}

std::string keys_hint() {
    std::string s = "valid keys:";
    for (const auto& k : config_keys()) s += " " + k;
    return s;
}

} // namespace

void TrainConfig::validate() const {
    if (!(r_low < input_size && input_size < hr_crop))
        throw std::invalid_argument("train config: need r_low < input_size < hr_crop");
    if (r_high_low == 0 || r_high_low > hr_crop)
        throw std::invalid_argument("train config: r_high_low must lie in (0, hr_crop]");
    if (hr_crop % input_size != 0)
        throw std::invalid_argument("train config: hr_crop must be a multiple of input_size");
    if (!(mask_ratio >= 0.0 && mask_ratio < 1.0))
        throw std::invalid_argument("train config: mask ratio must lie in [0, 1)");
    if (batch_size == 0) throw std::invalid_argument("train config: zero batch size");
    if (epochs == 0 && max_steps == 0)
        throw std::invalid_argument("train config: nothing to run (epochs and max_steps both 0)");
    encoder.validate();
    decoder.validate();
    loss.validate();
    optim.validate();
    if (encoder.input_size != input_size)
        throw std::invalid_argument("train config: encoder input size differs from input_size");
    if (decoder.token_grid_side != encoder.grid_side())
        throw std::invalid_argument("train config: decoder grid does not match the encoder");
    if (decoder.latent_dim != encoder.embed_dim)
        throw std::invalid_argument("train config: decoder latent width does not match encoder");
    if (decoder.out_channels != encoder.in_channels)
        throw std::invalid_argument("train config: decoder channels do not match the input");
    if (decoder.has_class_token != encoder.use_class_token)
        throw std::invalid_argument("train config: class token settings disagree");
    if (decoder.low_out_size != input_size || decoder.high_out_size != hr_crop)
        throw std::invalid_argument(
            "train config: decoder bands must be input_size and hr_crop to match the targets");
}

json config_to_json(const TrainConfig& cfg) {
    return json{{"hr_crop", cfg.hr_crop},
                {"input_size", cfg.input_size},
                {"r_low", cfg.r_low},
                {"r_high_low", cfg.r_high_low},
                {"mask_ratio", cfg.mask_ratio},
                {"hflip", cfg.hflip},
                {"epochs", cfg.epochs},
                {"batch_size", cfg.batch_size},
                {"max_steps", cfg.max_steps},
                {"seed", cfg.seed},
                {"encoder", encoder_to_json(cfg.encoder)},
                {"decoder", decoder_to_json(cfg.decoder)},
                {"loss", loss_to_json(cfg.loss)},
                {"optim", optim_to_json(cfg.optim)}};
}

TrainConfig config_from_json(const json& j) {
    TrainConfig c;
    check_keys(j, config_to_json(c), "");
    read_field(j, "hr_crop", c.hr_crop);
    read_field(j, "input_size", c.input_size);
    read_field(j, "r_low", c.r_low);
    read_field(j, "r_high_low", c.r_high_low);
    read_field(j, "mask_ratio", c.mask_ratio);
    read_field(j, "hflip", c.hflip);
    read_field(j, "epochs", c.epochs);
    read_field(j, "batch_size", c.batch_size);
    read_field(j, "max_steps", c.max_steps);
    read_field(j, "seed", c.seed);
    if (j.contains("encoder")) c.encoder = encoder_from_json(j.at("encoder"), c.encoder);
    if (j.contains("decoder")) c.decoder = decoder_from_json(j.at("decoder"), c.decoder);
    if (j.contains("loss")) c.loss = loss_from_json(j.at("loss"), c.loss);
    if (j.contains("optim")) c.optim = optim_from_json(j.at("optim"), c.optim);
    return c;
}

TrainConfig load_train_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("config: cannot open '" + path + "'");
    json j;
    try {
        in >> j;
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config: parse failure in '" + path + "': " + e.what());
    }
    return config_from_json(j);
}

void save_train_config(const TrainConfig& cfg, const std::string& path) {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("config: cannot write '" + path + "'");
    out << config_to_json(cfg).dump(2) << "\n";
}

TrainConfig preset_config(const std::string& name) {
    TrainConfig c; // defaults are the vit-base recipe
    if (name == "vit-base") return c;
    if (name == "vit-large") {
        c.encoder.embed_dim = 1024;
        c.encoder.depth = 24;
        c.encoder.heads = 16;
        c.decoder.latent_dim = 1024;
        return c;
    }
    if (name == "toy") {
        c.hr_crop = 128;
        c.input_size = 64;
        c.r_low = 4;
        c.r_high_low = 16;
        c.batch_size = 8;
        c.epochs = 8;
        c.encoder.input_size = 64;
        c.encoder.patch_size = 8;
        c.encoder.embed_dim = 32;
        c.encoder.depth = 2;
        c.encoder.heads = 4;
        c.encoder.mlp_ratio = 2.0;
        c.decoder.latent_dim = 32;
        c.decoder.decode_dim = 16;
        c.decoder.decode_depth = 1;
        c.decoder.heads = 4;
        c.decoder.mlp_ratio = 2.0;
        c.decoder.token_grid_side = 8;
        c.decoder.low_out_size = 64;
        c.decoder.high_out_size = 128;
        c.decoder.fmb_per_block = 1;
        c.optim.learning_rate = 2e-3;
        c.optim.weight_decay = 0.01;
        c.optim.warmup_steps = 10;
        c.optim.total_steps = 200;
        return c;
    }
    std::string names;
    for (const auto& n : preset_names()) names += (names.empty() ? "" : ", ") + n;
    throw std::invalid_argument("config: unknown preset '" + name + "'; have " + names);
}

std::vector<std::string> preset_names() { return {"toy", "vit-base", "vit-large"}; }

std::vector<std::string> config_keys() {
    std::vector<std::string> keys;
    collect_keys(config_to_json(TrainConfig{}), "", keys);
    return keys;
}

void apply_overrides(json& tree, const std::vector<std::string>& overrides) {
    for (const std::string& ov : overrides) {
        auto eq = ov.find('=');
        if (eq == std::string::npos || eq == 0)
            throw std::invalid_argument("config: override '" + ov + "' is not key=value; " +
                                        keys_hint());
        std::string path = ov.substr(0, eq);
        std::string value = ov.substr(eq + 1);

        json* node = &tree;
        std::size_t start = 0;
        std::string leaf;
        while (true) {
            std::size_t dot = path.find('.', start);
            std::string part = path.substr(start, dot - start);
            if (!node->is_object() || !node->contains(part))
                throw std::invalid_argument("config: unknown key '" + path + "'; " + keys_hint());
            if (dot == std::string::npos) {
                leaf = part;
                break;
            }
            node = &node->at(part);
            start = dot + 1;
        }
        json& slot = node->at(leaf);
        if (slot.is_object())
            throw std::invalid_argument("config: key '" + path + "' is a section, not a value; " +
                                        keys_hint());

        json parsed;
        try {
            parsed = json::parse(value);
        } catch (const json::parse_error&) {
            parsed = value; // unquoted strings (enum names, paths)
        }
        if (slot.is_string() && !parsed.is_string())
            parsed = value;
        else if (slot.is_boolean() && !parsed.is_boolean())
            throw std::invalid_argument("config: key '" + path + "' wants true/false");
        else if (slot.is_number() && !parsed.is_number())
            throw std::invalid_argument("config: key '" + path + "' wants a number");
        slot = parsed;
    }
}

} // namespace msmae
