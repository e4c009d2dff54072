#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msmae/eval.hpp"
#include "msmae/pipeline.hpp"
#include "msmae/posenc.hpp"

namespace fs = std::filesystem;
using namespace msmae;

namespace {

// --config accepts a preset name or a JSON file; --set overrides stack on
// top; --seed wins over both.
TrainConfig resolve_config(const std::string& arg, const std::vector<std::string>& sets,
                           std::optional<std::uint64_t> seed) {
    nlohmann::json tree;
    auto presets = preset_names();
    if (std::find(presets.begin(), presets.end(), arg) != presets.end()) {
        tree = config_to_json(preset_config(arg));
    } else if (fs::exists(arg)) {
        tree = config_to_json(load_train_config(arg));
    } else {
        std::string names;
        for (const auto& n : presets) names += (names.empty() ? "" : ", ") + n;
        throw std::invalid_argument("config: '" + arg + "' is neither a preset (" + names +
                                    ") nor an existing file");
    }
    apply_overrides(tree, sets);
    if (seed) tree["seed"] = *seed;
    TrainConfig cfg = config_from_json(tree);
    cfg.validate();
    return cfg;
}

fs::path command_dir(const std::string& out, const char* command) {
    fs::path dir = fs::path(out) / command;
    fs::create_directories(dir);
    return dir;
}

void require_file(const std::string& path, const char* what) {
    if (!fs::exists(path))
        throw std::invalid_argument(std::string(what) + " '" + path + "' does not exist");
}

FeaturePooling parse_pooling(const std::string& s) {
    if (s == "mean") return FeaturePooling::MeanPatches;
    if (s == "cls") return FeaturePooling::ClassToken;
    throw std::invalid_argument("pooling must be 'mean' or 'cls', got '" + s + "'");
}

Model load_model(const std::string& ckpt) {
    require_file(ckpt, "checkpoint");
    TrainConfig cfg = peek_checkpoint_config(ckpt);
    Model model(cfg);
    AdamW opt(model.store, cfg.optim);
    load_checkpoint_state(ckpt, model.store, opt);
    return model;
}

struct SynthArgs {
    std::string out;
    SynthSpec spec;
};

int run_synth(const SynthArgs& a) {
    fs::path dir = command_dir(a.out, "synth-data");
    DatasetManifest m = synth_dataset(dir.string(), a.spec);
    std::cout << "wrote " << m.entries.size() << " scenes and manifest.csv to " << dir.string()
              << "\n";
    return 0;
}

struct PretrainArgs {
    std::string config = "toy", data, out, resume;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::size_t save_every = 0;
};

int run_pretrain(const PretrainArgs& a) {
    require_file(a.data, "manifest");
    DatasetManifest data = load_manifest(a.data);

    std::unique_ptr<Trainer> trainer;
    if (!a.resume.empty()) {
        if (a.seed || !a.sets.empty())
            throw std::invalid_argument(
                "pretrain: --resume takes its config from the checkpoint; drop --set/--seed");
        require_file(a.resume, "checkpoint");
        trainer = std::make_unique<Trainer>(a.resume, data);
    } else {
        trainer = std::make_unique<Trainer>(resolve_config(a.config, a.sets, a.seed), data);
    }

    fs::path dir = command_dir(a.out, "pretrain");
    save_train_config(trainer->config(), (dir / "config.json").string());

    fs::path log_path = dir / "train_log.csv";
    bool append = !a.resume.empty() && fs::exists(log_path);
    std::ofstream log(log_path, append ? std::ios::app : std::ios::trunc);
    if (!log) throw std::runtime_error("cannot write " + log_path.string());
    log << std::setprecision(17);
    if (!append) log << "step,loss_total,loss_low,loss_high\n";

    std::size_t planned = trainer->steps_planned();
    std::cout << "training: " << trainer->steps_done() << "/" << planned << " steps done, "
              << trainer->steps_per_epoch() << " per epoch\n";
    std::size_t report_every = std::max<std::size_t>(1, planned / 10);
    while (!trainer->done()) {
        StepLog s = trainer->step();
        log << s.step << ',' << s.terms.total << ',' << s.terms.low << ',' << s.terms.high
            << '\n';
        if (s.step % report_every == 0 || s.step == planned)
            std::cout << "step " << s.step << "/" << planned << "  loss " << std::setprecision(6)
                      << s.terms.total << "  (low " << s.terms.low << ", high " << s.terms.high
                      << ")\n";
        if (a.save_every && s.step % a.save_every == 0) {
            char name[32];
            std::snprintf(name, sizeof name, "step_%06zu.ckpt", s.step);
            trainer->save((dir / name).string());
        }
    }
    trainer->save((dir / "final.ckpt").string());
    std::cout << "wrote " << (dir / "final.ckpt").string() << " and train_log.csv\n";
    return 0;
}

struct ExtractArgs {
    std::string checkpoint, data, out, pooling = "mean";
    double scale = 100.0;
};

int run_extract(const ExtractArgs& a) {
    require_file(a.data, "manifest");
    Model model = load_model(a.checkpoint);
    DatasetManifest data = load_manifest(a.data);
    FeatureSet set = extract_features(model, data, a.scale, parse_pooling(a.pooling));

    fs::path dir = command_dir(a.out, "extract");
    std::ostringstream name;
    name << "features_" << set.dataset_name << "_" << set.scale_pct << ".csv";
    fs::path path = dir / name.str();
    save_features(set, path.string());
    std::cout << "wrote " << set.labels.size() << " embeddings to " << path.string() << "\n";
    return 0;
}

struct KnnArgs {
    std::string checkpoint, train_data, val_data, train_features, val_features, out;
    std::string pooling = "mean";
    std::vector<std::size_t> ks = {20};
};

int run_knn(const KnnArgs& a) {
    bool model_mode = !a.checkpoint.empty();
    bool file_mode = !a.train_features.empty() || !a.val_features.empty();
    if (model_mode == file_mode)
        throw std::invalid_argument(
            "knn-eval: pass either --checkpoint with --train-data/--val-data, or "
            "--train-features with --val-features");

    KnnReport report;
    if (model_mode) {
        if (a.train_data.empty() || a.val_data.empty())
            throw std::invalid_argument("knn-eval: --checkpoint needs --train-data and --val-data");
        require_file(a.train_data, "manifest");
        require_file(a.val_data, "manifest");
        Model model = load_model(a.checkpoint);
        report = multiscale_eval(model, load_manifest(a.train_data), load_manifest(a.val_data),
                                 a.ks, parse_pooling(a.pooling),
                                 fs::path(a.checkpoint).filename().string());
    } else {
        if (a.train_features.empty() || a.val_features.empty())
            throw std::invalid_argument("knn-eval: need both --train-features and --val-features");
        require_file(a.train_features, "feature file");
        require_file(a.val_features, "feature file");
        FeatureSet train = load_features(a.train_features);
        FeatureSet val = load_features(a.val_features);
        report.checkpoint = "features";
        for (std::size_t k : a.ks) {
            KnnRow row;
            row.dataset = val.dataset_name;
            row.scale_pct = val.scale_pct;
            row.k = k;
            row.accuracy = knn_classify(train, val, k);
            row.n_train = train.labels.size();
            row.n_val = val.labels.size();
            report.rows.push_back(std::move(row));
        }
    }

    fs::path path = command_dir(a.out, "knn-eval") / "report.csv";
    save_report_csv(report, path.string());
    for (const KnnRow& r : report.rows)
        std::cout << r.dataset << "  scale " << std::setw(5) << r.scale_pct << "%  k=" << r.k
                  << "  accuracy " << std::setprecision(4) << r.accuracy << "\n";
    std::cout << "wrote " << report.rows.size() << " rows to " << path.string() << "\n";
    return 0;
}

struct PreviewArgs {
    std::string config = "toy", image, data, out;
    std::vector<std::string> sets;
    double gsd = 1.0;
    std::size_t index = 0;
};

int run_preview(const PreviewArgs& a) {
    TrainConfig cfg = resolve_config(a.config, a.sets, std::nullopt);
    RasterImage src;
    if (!a.image.empty()) {
        require_file(a.image, "image");
        src = load_png(a.image, a.gsd);
    } else if (!a.data.empty()) {
        require_file(a.data, "manifest");
        DatasetManifest m = load_manifest(a.data);
        if (a.index >= m.entries.size())
            throw std::invalid_argument("preview: --index " + std::to_string(a.index) +
                                        " out of range for " +
                                        std::to_string(m.entries.size()) + " entries");
        src = load_png(m.resolve(a.index), m.entries[a.index].gsd);
    } else {
        throw std::invalid_argument("preview: pass --image or --data");
    }

    std::size_t h = src.pixels.dim(0), w = src.pixels.dim(1);
    if (h < cfg.hr_crop || w < cfg.hr_crop)
        throw std::invalid_argument("preview: image is " + std::to_string(h) + "x" +
                                    std::to_string(w) + ", smaller than the " +
                                    std::to_string(cfg.hr_crop) + " source crop");
    RasterImage hr =
        crop(src, (h - cfg.hr_crop) / 2, (w - cfg.hr_crop) / 2, cfg.hr_crop, cfg.hr_crop);
    BandpassTargets t = build_targets(hr, cfg.input_size, cfg.r_low, cfg.r_high_low);
    RasterImage input = make_input(hr, cfg.input_size);

    // the high band is signed; render it centered on mid-gray
    RasterImage high_vis = t.high;
    for (std::size_t i = 0; i < high_vis.pixels.numel(); ++i)
        high_vis.pixels[i] = 0.5 + 0.5 * high_vis.pixels[i];
    RasterImage recombined = t.blur_hr;
    for (std::size_t i = 0; i < recombined.pixels.numel(); ++i)
        recombined.pixels[i] += t.high.pixels[i];

    fs::path dir = command_dir(a.out, "targets-preview");
    save_png(hr, (dir / "source.png").string());
    save_png(input, (dir / "input.png").string());
    save_png(t.low, (dir / "target_low.png").string());
    save_png(high_vis, (dir / "target_high.png").string());
    save_png(t.blur_hr, (dir / "blur.png").string());
    save_png(recombined, (dir / "recombined.png").string());
    std::cout << "wrote 6 panels to " << dir.string() << "\n";
    return 0;
}

struct PosencArgs {
    std::string out;
    std::size_t dim = 64, grid = 8;
    double gsd = 2.0, reference = 1.0, temperature = 10000.0;
};

void write_grid_csv(const PositionalGrid& g, const fs::path& path) {
    std::ofstream f(path);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f << std::setprecision(17);
    f << "token,y,x";
    for (std::size_t j = 0; j < g.values.dim(1); ++j) f << ",e" << j;
    f << "\n";
    for (std::size_t t = 0; t < g.values.dim(0); ++t) {
        f << t << ',' << t / g.grid_side << ',' << t % g.grid_side;
        for (std::size_t j = 0; j < g.values.dim(1); ++j) f << ',' << g.values.at(t, j);
        f << "\n";
    }
}

int run_posenc(const PosencArgs& a) {
    PosEncConfig pc{a.dim, a.temperature, a.reference, GsdFactorOrientation::GroundOverReference};
    PositionalGrid standard = standard_2d_sincos(a.grid, pc);
    PositionalGrid scaled = gsd_2d_sincos(a.grid, a.gsd, pc);
    fs::path dir = command_dir(a.out, "posenc-dump");
    write_grid_csv(standard, dir / "standard.csv");
    write_grid_csv(scaled, dir / "gsd_scaled.csv");
    std::cout << "wrote standard.csv and gsd_scaled.csv (grid " << a.grid << ", dim " << a.dim
              << ", gsd " << a.gsd << ") to " << dir.string() << "\n";
    return 0;
}

struct ReportArgs {
    std::string config = "toy", out;
    std::vector<std::string> sets;
};

int run_param_report(const ReportArgs& a) {
    TrainConfig cfg = resolve_config(a.config, a.sets, std::nullopt);
    ParamReport r = count_params(cfg.encoder, cfg.decoder);
    std::ostringstream out;
    out << "parameters (config " << a.config << ")\n";
    auto line = [&](const char* k, std::size_t v) {
        out << "  " << std::left << std::setw(28) << k << std::right << std::setw(12) << v
            << "\n";
    };
    line("encoder", r.encoder);
    line("pyramid decoder", r.decoder);
    line("total", r.total);
    line("8-block decoder baseline", r.vanilla_decoder);
    line("total with 8-block decoder", r.vanilla_total);
    double pct = 100.0 * (1.0 - double(r.decoder) / double(r.vanilla_decoder));
    out << "  pyramid decoder is " << std::setprecision(3) << pct
        << "% smaller than the 8-block baseline\n";
    std::cout << out.str();
    if (!a.out.empty()) {
        fs::path path = command_dir(a.out, "param-report") / "report.txt";
        std::ofstream f(path);
        f << out.str();
        std::cout << "wrote " << path.string() << "\n";
    }
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"scale-aware masked-autoencoder pretraining, evaluation, and inspection"};
    app.require_subcommand(1);
    std::ostringstream footer;
    footer << "config override keys (--set key=value):";
    std::size_t col = 999;
    for (const std::string& k : config_keys()) {
        if (col + k.size() > 76) {
            footer << "\n  ";
            col = 2;
        }
        footer << k << "  ";
        col += k.size() + 2;
    }
    app.footer(footer.str());

    SynthArgs synth;
    auto* sc_synth = app.add_subcommand("synth-data", "generate a labeled synthetic dataset");
    sc_synth->add_option("--out", synth.out, "output directory")->required();
    sc_synth->add_option("--scenes", synth.spec.n_scenes, "number of scenes");
    sc_synth->add_option("--size", synth.spec.base_size, "scene side in pixels");
    sc_synth->add_option("--classes", synth.spec.classes, "number of classes");
    sc_synth->add_option("--seed", synth.spec.seed, "generator seed");
    sc_synth->add_option("--gsd-min", synth.spec.gsd_min, "lower gsd bound");
    sc_synth->add_option("--gsd-max", synth.spec.gsd_max, "upper gsd bound");

    PretrainArgs pre;
    std::uint64_t pre_seed = 0;
    auto* sc_pre = app.add_subcommand("pretrain", "run masked pretraining");
    sc_pre->add_option("--config", pre.config, "preset name or config file");
    sc_pre->add_option("--set", pre.sets, "config override key=value")->take_all();
    auto* pre_seed_opt = sc_pre->add_option("--seed", pre_seed, "run seed");
    sc_pre->add_option("--data", pre.data, "training manifest")->required();
    sc_pre->add_option("--out", pre.out, "output directory")->required();
    sc_pre->add_option("--resume", pre.resume, "checkpoint to continue from");
    sc_pre->add_option("--save-every", pre.save_every, "checkpoint every N steps (0: final only)");

    ExtractArgs ext;
    auto* sc_ext = app.add_subcommand("extract", "embed a dataset with a frozen encoder");
    sc_ext->add_option("--checkpoint", ext.checkpoint, "trained checkpoint")->required();
    sc_ext->add_option("--data", ext.data, "manifest to embed")->required();
    sc_ext->add_option("--scale", ext.scale, "resample percentage in (0, 100]");
    sc_ext->add_option("--pooling", ext.pooling, "mean | cls");
    sc_ext->add_option("--out", ext.out, "output directory")->required();

    KnnArgs knn;
    auto* sc_knn = app.add_subcommand("knn-eval", "nearest-neighbor probe of frozen features");
    sc_knn->add_option("--checkpoint", knn.checkpoint, "trained checkpoint (multiscale sweep)");
    sc_knn->add_option("--train-data", knn.train_data, "train manifest (with --checkpoint)");
    sc_knn->add_option("--val-data", knn.val_data, "validation manifest (with --checkpoint)");
    sc_knn->add_option("--train-features", knn.train_features, "prewritten train features");
    sc_knn->add_option("--val-features", knn.val_features, "prewritten validation features");
    sc_knn->add_option("--k", knn.ks, "neighbor counts")->take_all();
    sc_knn->add_option("--pooling", knn.pooling, "mean | cls");
    sc_knn->add_option("--out", knn.out, "output directory")->required();

    PreviewArgs prev;
    auto* sc_prev = app.add_subcommand("targets-preview",
                                       "write the band-split panels for one image");
    sc_prev->add_option("--config", prev.config, "preset name or config file");
    sc_prev->add_option("--set", prev.sets, "config override key=value")->take_all();
    sc_prev->add_option("--image", prev.image, "source PNG");
    sc_prev->add_option("--gsd", prev.gsd, "gsd of --image");
    sc_prev->add_option("--data", prev.data, "manifest (alternative to --image)");
    sc_prev->add_option("--index", prev.index, "entry index into --data");
    sc_prev->add_option("--out", prev.out, "output directory")->required();

    PosencArgs pe;
    auto* sc_pe = app.add_subcommand("posenc-dump", "write positional-encoding tables");
    sc_pe->add_option("--dim", pe.dim, "embedding width (divisible by 4)");
    sc_pe->add_option("--grid", pe.grid, "token grid side");
    sc_pe->add_option("--gsd", pe.gsd, "gsd for the scaled table");
    sc_pe->add_option("--reference", pe.reference, "reference gsd");
    sc_pe->add_option("--temperature", pe.temperature, "frequency base");
    sc_pe->add_option("--out", pe.out, "output directory")->required();

    ReportArgs rep;
    auto* sc_rep = app.add_subcommand("param-report", "print per-module parameter counts");
    sc_rep->add_option("--config", rep.config, "preset name or config file");
    sc_rep->add_option("--set", rep.sets, "config override key=value")->take_all();
    sc_rep->add_option("--out", rep.out, "also write the table under this directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    try {
        if (*pre_seed_opt) pre.seed = pre_seed;
        if (*sc_synth) return run_synth(synth);
        if (*sc_pre) return run_pretrain(pre);
        if (*sc_ext) return run_extract(ext);
        if (*sc_knn) return run_knn(knn);
        if (*sc_prev) return run_preview(prev);
        if (*sc_pe) return run_posenc(pe);
        if (*sc_rep) return run_param_report(rep);
    } catch (const std::invalid_argument& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::out_of_range& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
