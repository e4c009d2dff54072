#include "msmae/pipeline.hpp"

#include <cmath>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>

#include <zlib.h>

#include "msmae/layers.hpp"
#include "msmae/patching.hpp"
#include "msmae/rng.hpp"

namespace msmae {

namespace {
const TrainConfig& checked(const TrainConfig& cfg) {
    cfg.validate();
    return cfg;
}
} // namespace

Model::Model(const TrainConfig& cfg)
    : store(derive_key(checked(cfg).seed, "params")),
      encoder(store, cfg.encoder),
      decoder(store, cfg.decoder) {}

ParamReport count_params(const EncoderConfig& enc, const DecoderConfig& dec) {
    enc.validate();
    dec.validate();
    ParamReport r;
    {
        ParamCounter c;
        Encoder e(c, enc);
        Decoder d(c, dec);
        r.encoder = c.total_with_prefix("enc.");
        r.decoder = c.total_with_prefix("dec.");
        r.total = c.total();
    }
    {
        // the conventional alternative: project, fill masks, run 8 blocks
        // at the same width, predict one patch of pixels per token
        ParamCounter c;
        Linear embed(c, "van.embed", dec.latent_dim, dec.decode_dim);
        c.add("van.mask_token", {dec.decode_dim}, ParamInit::normal(0.02));
        for (int i = 0; i < 8; ++i)
            TransformerBlock block(c, "van.block" + std::to_string(i), dec.decode_dim,
                                   dec.heads, dec.mlp_ratio);
        LayerNorm norm(c, "van.norm", dec.decode_dim);
        Linear head(c, "van.head", dec.decode_dim, enc.patch_len());
        r.vanilla_decoder = c.total();
        r.vanilla_total = r.encoder + r.vanilla_decoder;
    }
    return r;
}

// ---- checkpoints -----------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'M', 'S', 'A', 'E'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::string& b, std::uint32_t v) {
    b.append(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_u64(std::string& b, std::uint64_t v) {
    b.append(reinterpret_cast<const char*>(&v), sizeof v);
}
void put_doubles(std::string& b, const Tensor& t) {
    b.append(reinterpret_cast<const char*>(t.data()), t.numel() * sizeof(double));
}

std::uint32_t payload_crc(const std::string& buf, std::size_t lo, std::size_t hi) {
    uLong crc = crc32_z(0UL, Z_NULL, 0);
    return static_cast<std::uint32_t>(
        crc32_z(crc, reinterpret_cast<const Bytef*>(buf.data() + lo), hi - lo));
}

struct Cursor {
    const char* p;
    const char* end;

    void need(std::size_t n) const {
        if (static_cast<std::size_t>(end - p) < n)
            throw std::runtime_error("checkpoint: truncated record");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v;
        std::memcpy(&v, p, 4);
        p += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v;
        std::memcpy(&v, p, 8);
        p += 8;
        return v;
    }
    std::string bytes(std::size_t n) {
        need(n);
        std::string s(p, n);
        p += n;
        return s;
    }
    void doubles(Tensor& t) {
        need(t.numel() * sizeof(double));
        std::memcpy(t.data(), p, t.numel() * sizeof(double));
        p += t.numel() * sizeof(double);
    }
};

std::string read_and_verify(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint: cannot open '" + path + "'");
    std::ostringstream ss;
    ss << in.rdbuf();
    std::string buf = ss.str();
    if (buf.size() < 12 || std::memcmp(buf.data(), kMagic, 4) != 0)
        throw std::runtime_error("checkpoint: '" + path + "' is not a checkpoint file");
    std::uint32_t version;
    std::memcpy(&version, buf.data() + 4, 4);
    if (version != kVersion)
        throw std::runtime_error("checkpoint: '" + path + "' is format version " +
                                 std::to_string(version) + ", this build reads version " +
                                 std::to_string(kVersion));
    std::uint32_t stored;
    std::memcpy(&stored, buf.data() + buf.size() - 4, 4);
    if (payload_crc(buf, 8, buf.size() - 4) != stored)
        throw std::runtime_error("checkpoint: checksum mismatch, '" + path + "' is corrupt");
    return buf;
}

} // namespace

void save_checkpoint(const std::string& path, const TrainConfig& cfg, std::size_t step,
                     const ParamStore& store, const AdamW& opt) {
    std::string cfg_json = config_to_json(cfg).dump();

    std::string buf;
    buf.append(kMagic, 4);
    put_u32(buf, kVersion);
    std::size_t payload_start = buf.size();

    put_u64(buf, step);
    put_u64(buf, cfg_json.size());
    buf.append(cfg_json);
    put_u64(buf, store.entries().size());
    for (const auto& [name, p] : store.entries()) {
        put_u32(buf, static_cast<std::uint32_t>(name.size()));
        buf.append(name);
        put_u32(buf, static_cast<std::uint32_t>(p.value.ndim()));
        for (std::size_t d = 0; d < p.value.ndim(); ++d) put_u64(buf, p.value.dim(d));
        put_doubles(buf, p.value);
    }
    put_u64(buf, opt.t);
    for (const auto& [name, p] : store.entries()) {
        put_doubles(buf, opt.m.at(name));
        put_doubles(buf, opt.v.at(name));
    }
    put_u32(buf, payload_crc(buf, payload_start, buf.size()));

    std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw std::runtime_error("checkpoint: cannot write '" + tmp + "'");
        out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
        if (!out) throw std::runtime_error("checkpoint: short write to '" + tmp + "'");
    }
    std::filesystem::rename(tmp, path);
}

TrainConfig peek_checkpoint_config(const std::string& path) {
    std::string buf = read_and_verify(path);
    Cursor c{buf.data() + 8, buf.data() + buf.size() - 4};
    c.u64(); // step
    std::uint64_t len = c.u64();
    return config_from_json(nlohmann::json::parse(c.bytes(len)));
}

std::size_t load_checkpoint_state(const std::string& path, ParamStore& store, AdamW& opt) {
    std::string buf = read_and_verify(path);
    Cursor c{buf.data() + 8, buf.data() + buf.size() - 4};
    std::uint64_t step = c.u64();
    c.bytes(c.u64()); // config, already consumed by the caller via peek

    std::uint64_t n = c.u64();
    if (n != store.entries().size())
        throw std::runtime_error("checkpoint: holds " + std::to_string(n) +
                                 " tensors, model has " +
                                 std::to_string(store.entries().size()));
    std::vector<std::string> order;
    order.reserve(n);
    for (std::uint64_t i = 0; i < n; ++i) {
        std::string name = c.bytes(c.u32());
        if (!store.has(name))
            throw std::runtime_error("checkpoint: unknown tensor '" + name + "'");
        Param& p = store.at(name);
        std::uint32_t ndim = c.u32();
        std::vector<std::size_t> shape(ndim);
        for (auto& d : shape) d = c.u64();
        if (shape != p.value.shape())
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        c.doubles(p.value);
        p.grad.fill(0.0);
        order.push_back(std::move(name));
    }
    opt.t = c.u64();
    for (const std::string& name : order) {
        c.doubles(opt.m.at(name));
        c.doubles(opt.v.at(name));
    }
    if (c.p != c.end) throw std::runtime_error("checkpoint: trailing bytes after state");
    return step;
}

// ---- training --------------------------------------------------------------

Trainer::Trainer(const TrainConfig& cfg, const DatasetManifest& data)
    : cfg_(cfg),
      model_(std::make_unique<Model>(cfg_)),
      opt_(std::make_unique<AdamW>(model_->store, cfg_.optim)) {
    load_images(data);
}

Trainer::Trainer(const std::string& checkpoint_path, const DatasetManifest& data)
    : cfg_(peek_checkpoint_config(checkpoint_path)),
      model_(std::make_unique<Model>(cfg_)),
      opt_(std::make_unique<AdamW>(model_->store, cfg_.optim)) {
    step_ = load_checkpoint_state(checkpoint_path, model_->store, *opt_);
    load_images(data);
}

void Trainer::load_images(const DatasetManifest& data) {
    if (data.entries.empty()) throw std::invalid_argument("trainer: empty dataset");
    images_.reserve(data.entries.size());
    for (std::size_t i = 0; i < data.entries.size(); ++i) {
        RasterImage img = load_png(data.resolve(i), data.entries[i].gsd);
        if (img.pixels.dim(0) < cfg_.hr_crop || img.pixels.dim(1) < cfg_.hr_crop)
            throw std::invalid_argument("trainer: '" + data.resolve(i) + "' is " +
                                        std::to_string(img.pixels.dim(0)) + "x" +
                                        std::to_string(img.pixels.dim(1)) +
                                        ", smaller than the " +
                                        std::to_string(cfg_.hr_crop) + " source crop");
        images_.push_back(std::move(img));
        image_names_.push_back(data.entries[i].path);
    }
    if (images_.size() < cfg_.batch_size)
        throw std::invalid_argument("trainer: dataset of " + std::to_string(images_.size()) +
                                    " can't fill a batch of " +
                                    std::to_string(cfg_.batch_size));
}

std::size_t Trainer::steps_per_epoch() const { return images_.size() / cfg_.batch_size; }

std::size_t Trainer::steps_planned() const {
    if (cfg_.max_steps > 0) return cfg_.max_steps;
    return cfg_.epochs * steps_per_epoch();
}

namespace {
RasterImage hflip_image(const RasterImage& img) {
    std::size_t h = img.pixels.dim(0), w = img.pixels.dim(1), c = img.pixels.dim(2);
    Tensor out(img.pixels.shape());
    for (std::size_t y = 0; y < h; ++y)
        for (std::size_t x = 0; x < w; ++x)
            for (std::size_t k = 0; k < c; ++k)
                out.at(y, w - 1 - x, k) = img.pixels.at(y, x, k);
    return {std::move(out), img.gsd};
}

// Same protocol as the mask shuffle: swap i with a draw from [0, i].
std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t key) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    Rng rng(key);
    for (std::size_t i = n - 1; i > 0; --i)
        std::swap(idx[i], idx[rng.below(i + 1)]);
    return idx;
}
} // namespace

StepLog Trainer::step() {
    if (done()) throw std::logic_error("trainer: all planned steps already taken");
    if (opt_->t != step_) throw std::logic_error("trainer: optimizer clock out of sync");

    std::size_t spe = steps_per_epoch();
    std::size_t epoch = step_ / spe;
    std::size_t slot = (step_ % spe) * cfg_.batch_size; // drop-last batching
    std::vector<std::size_t> order =
        epoch_order(images_.size(), derive_key(cfg_.seed, "shuffle", epoch));

    model_->store.zero_grads();
    double inv = 1.0 / double(cfg_.batch_size);
    LossTerms mean;

    for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
        std::size_t di = order[slot + b];
        const RasterImage& src = images_[di];

        RasterImage hr = random_crop(src, cfg_.hr_crop, derive_key(cfg_.seed, "crop", epoch, di));
        if (cfg_.hflip && Rng(derive_key(cfg_.seed, "flip", epoch, di)).below(2) != 0)
            hr = hflip_image(hr);
        BandpassTargets targets = build_targets(hr, cfg_.input_size, cfg_.r_low, cfg_.r_high_low);
        RasterImage input = make_input(hr, cfg_.input_size);
        double want_gsd = src.gsd * double(cfg_.hr_crop) / double(cfg_.input_size);
        if (std::fabs(input.gsd - want_gsd) > 1e-9 * want_gsd)
            throw std::logic_error("trainer: gsd drifted while building the input");

        PatchGrid pg = patchify(input, cfg_.encoder.patch_size);
        MaskPlan plan = sample_mask(cfg_.encoder.n_patches(), cfg_.mask_ratio,
                                    derive_key(cfg_.seed, "mask", epoch, di));
        Tensor visible = gather_rows(pg.patches, plan.visible_idx);

        Tensor tokens = model_->encoder.embed_patches(visible);
        Tensor latents = model_->encoder.encode(tokens, plan, input.gsd);
        auto [low, high] = model_->decoder.decode_forward(latents, plan, input.gsd);

        LossTerms terms =
            reconstruction_loss(low.pixels, high.pixels, targets, cfg_.loss, &plan);
        if (!std::isfinite(terms.total))
            throw std::runtime_error(
                "trainer: non-finite loss at step " + std::to_string(step_ + 1) + " (epoch " +
                std::to_string(epoch) + ", image '" + image_names_[di] + "'): total=" +
                std::to_string(terms.total) + " low=" + std::to_string(terms.low) +
                " high=" + std::to_string(terms.high));
        mean.total += terms.total * inv;
        mean.low += terms.low * inv;
        mean.high += terms.high * inv;

        LossGrads g = reconstruction_loss_grad(low.pixels, high.pixels, targets, cfg_.loss, &plan);
        if (g.dlow.numel() == 0) g.dlow = Tensor(low.pixels.shape());
        if (g.dhigh.numel() == 0) g.dhigh = Tensor(high.pixels.shape());
        for (std::size_t i = 0; i < g.dlow.numel(); ++i) g.dlow[i] *= inv;
        for (std::size_t i = 0; i < g.dhigh.numel(); ++i) g.dhigh[i] *= inv;

        Tensor dlatents = model_->decoder.decode_backward(g.dlow, g.dhigh);
        Tensor dvisible = model_->encoder.encode_backward(dlatents);
        (void)model_->encoder.embed_backward(dvisible);
    }

    double lr = lr_at(cfg_.optim, step_);
    opt_->step();
    ++step_;
    return {step_, mean, lr};
}

void Trainer::save(const std::string& path) const {
    save_checkpoint(path, cfg_, step_, model_->store, *opt_);
}

} // namespace msmae
