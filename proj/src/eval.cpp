#include "msmae/eval.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iomanip>
#include <map>
#include <sstream>

#include "msmae/kernels.hpp"
#include "msmae/patching.hpp"

namespace msmae {

FeatureSet extract_features(Model& model, const DatasetManifest& data, double scale_pct,
                            FeaturePooling pooling) {
    if (!(scale_pct > 0.0 && scale_pct <= 100.0))
        throw std::invalid_argument("extract: scale_pct must lie in (0, 100]");
    if (data.entries.empty()) throw std::invalid_argument("extract: empty dataset");
    const EncoderConfig& enc = model.encoder.config();
    if (pooling == FeaturePooling::ClassToken && !enc.use_class_token)
        throw std::invalid_argument("extract: class-token pooling on a model without one");

    FeatureSet fs;
    fs.dataset_name = data.name;
    fs.scale_pct = scale_pct;
    fs.features = Tensor({data.entries.size(), enc.embed_dim});
    fs.labels.resize(data.entries.size());

    MaskPlan plan = MaskPlan::all_visible(enc.n_patches());
    std::size_t cls_rows = enc.use_class_token ? 1 : 0;

    for (std::size_t i = 0; i < data.entries.size(); ++i) {
        RasterImage img = load_png(data.resolve(i), data.entries[i].gsd);
        std::size_t h = img.pixels.dim(0), w = img.pixels.dim(1);
        std::size_t side = std::min(h, w);
        if (h != w) img = crop(img, (h - side) / 2, (w - side) / 2, side, side);

        auto scaled = static_cast<std::size_t>(std::llround(double(side) * scale_pct / 100.0));
        if (scaled < enc.patch_size)
            throw ScaleTooSmallError(
                "extract: " + std::to_string(scale_pct) + "% of a " + std::to_string(side) +
                "px image is " + std::to_string(scaled) + "px, below one " +
                std::to_string(enc.patch_size) + "px patch");
        if (scaled != side) img = resample(img, scaled, scaled);
        if (scaled != enc.input_size) img = resample(img, enc.input_size, enc.input_size);

        PatchGrid pg = patchify(img, enc.patch_size);
        Tensor tokens = model.encoder.embed_patches(pg.patches);
        Tensor lat = model.encoder.encode(tokens, plan, img.gsd);

        std::size_t d = enc.embed_dim;
        std::vector<double> pooled(d, 0.0);
        if (pooling == FeaturePooling::ClassToken) {
            for (std::size_t j = 0; j < d; ++j) pooled[j] = lat.at(0, j);
        } else {
            std::size_t n = lat.dim(0) - cls_rows;
            for (std::size_t r = cls_rows; r < lat.dim(0); ++r)
                for (std::size_t j = 0; j < d; ++j) pooled[j] += lat.at(r, j);
            for (std::size_t j = 0; j < d; ++j) pooled[j] /= double(n);
        }
        double norm = std::sqrt(
            kernels::det_block_sum(d, [&](std::size_t j) { return pooled[j] * pooled[j]; }));
        if (!(norm > 1e-12))
            throw std::runtime_error("extract: degenerate (all-zero) embedding for '" +
                                     data.entries[i].path + "'");
        for (std::size_t j = 0; j < d; ++j) fs.features.at(i, j) = pooled[j] / norm;
        fs.labels[i] = data.entries[i].label;
    }
    return fs;
}

double knn_classify(const FeatureSet& train, const FeatureSet& val, std::size_t k) {
    std::size_t nt = train.features.ndim() == 2 ? train.features.dim(0) : 0;
    std::size_t nv = val.features.ndim() == 2 ? val.features.dim(0) : 0;
    if (nt == 0 || nv == 0) throw std::invalid_argument("knn: empty feature set");
    std::size_t d = train.features.dim(1);
    if (val.features.dim(1) != d)
        throw std::invalid_argument("knn: train and val feature widths differ");
    if (k == 0 || k > nt)
        throw std::invalid_argument("knn: k must lie in [1, n_train], got " +
                                    std::to_string(k) + " for " + std::to_string(nt));
    if (train.labels.size() != nt || val.labels.size() != nv)
        throw std::invalid_argument("knn: label count does not match rows");
    for (int l : train.labels)
        if (l < 0) throw std::invalid_argument("knn: unlabeled train instance");
    for (int l : val.labels)
        if (l < 0) throw std::invalid_argument("knn: unlabeled val instance");

    // cosine distance from norms, not from an assumed normalization, so
    // the result is invariant to positive rescaling of either side
    std::vector<double> tn(nt);
    for (std::size_t i = 0; i < nt; ++i)
        tn[i] = std::sqrt(kernels::det_block_sum(
            d, [&](std::size_t j) { return train.features.at(i, j) * train.features.at(i, j); }));

    std::vector<unsigned char> correct(nv, 0);
#pragma omp parallel for schedule(static)
    for (std::size_t v = 0; v < nv; ++v) {
        double vn = std::sqrt(kernels::det_block_sum(
            d, [&](std::size_t j) { return val.features.at(v, j) * val.features.at(v, j); }));
        std::vector<std::pair<double, std::size_t>> dist(nt);
        for (std::size_t i = 0; i < nt; ++i) {
            double dot = kernels::det_block_sum(
                d, [&](std::size_t j) { return train.features.at(i, j) * val.features.at(v, j); });
            double denom = tn[i] * vn;
            dist[i] = {denom > 0.0 ? 1.0 - dot / denom : 1.0, i};
        }
        std::partial_sort(dist.begin(), dist.begin() + std::ptrdiff_t(k), dist.end());
        std::map<int, std::size_t> votes;
        for (std::size_t i = 0; i < k; ++i) ++votes[train.labels[dist[i].second]];
        int best = -1;
        std::size_t best_count = 0;
        for (const auto& [label, count] : votes)
            if (count > best_count) { // ascending map order: ties keep the lowest id
                best = label;
                best_count = count;
            }
        correct[v] = (best == val.labels[v]) ? 1 : 0;
    }
    double hits = kernels::det_block_sum(nv, [&](std::size_t v) { return double(correct[v]); });
    return hits / double(nv);
}

KnnReport multiscale_eval(Model& model, const DatasetManifest& train,
                          const DatasetManifest& val, const std::vector<std::size_t>& ks,
                          FeaturePooling pooling, const std::string& checkpoint_id) {
    if (ks.empty()) throw std::invalid_argument("eval: no k values given");
    KnnReport report;
    report.checkpoint = checkpoint_id;
    FeatureSet train_fs = extract_features(model, train, 100.0, pooling);

    const double scales[] = {12.5, 25.0, 50.0, 100.0};
    for (double pct : scales) {
        FeatureSet val_fs;
        try {
            val_fs = extract_features(model, val, pct, pooling);
        } catch (const ScaleTooSmallError& e) {
            std::fprintf(stderr, "warning: skipping %g%% scale: %s\n", pct, e.what());
            continue;
        }
        for (std::size_t k : ks) {
            KnnRow row;
            row.dataset = val.name;
            row.scale_pct = pct;
            row.k = k;
            row.accuracy = knn_classify(train_fs, val_fs, k);
            row.n_train = train.entries.size();
            row.n_val = val.entries.size();
            report.rows.push_back(std::move(row));
        }
    }
    return report;
}

void save_features(const FeatureSet& fs, const std::string& path) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "# dataset=" << fs.dataset_name << " scale_pct=" << fs.scale_pct << "\n";
    out << "label";
    std::size_t d = fs.features.ndim() == 2 ? fs.features.dim(1) : 0;
    for (std::size_t j = 0; j < d; ++j) out << ",f" << j;
    out << "\n";
    for (std::size_t i = 0; i < fs.features.dim(0); ++i) {
        out << fs.labels.at(i);
        for (std::size_t j = 0; j < d; ++j) out << ',' << fs.features.at(i, j);
        out << "\n";
    }
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("features: cannot write '" + path + "'");
    f << out.str();
}

FeatureSet load_features(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::invalid_argument("features: cannot open '" + path + "'");
    std::string line;
    if (!std::getline(in, line) || line.rfind("# dataset=", 0) != 0)
        throw std::invalid_argument("features: '" + path + "' lacks the metadata line");
    FeatureSet fs;
    std::size_t sp = line.find(" scale_pct=");
    if (sp == std::string::npos)
        throw std::invalid_argument("features: '" + path + "' lacks scale_pct");
    fs.dataset_name = line.substr(10, sp - 10);
    fs.scale_pct = std::stod(line.substr(sp + 11));

    if (!std::getline(in, line) || line.rfind("label", 0) != 0)
        throw std::invalid_argument("features: '" + path + "' lacks the column header");
    std::size_t d = std::count(line.begin(), line.end(), ',');
    if (d == 0) throw std::invalid_argument("features: '" + path + "' has no feature columns");

    std::vector<double> buf;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::istringstream row(line);
        std::string cell;
        if (!std::getline(row, cell, ',')) break;
        fs.labels.push_back(std::stoi(cell));
        std::size_t got = 0;
        while (std::getline(row, cell, ',')) {
            buf.push_back(std::stod(cell));
            ++got;
        }
        if (got != d)
            throw std::invalid_argument("features: row " + std::to_string(fs.labels.size()) +
                                        " has " + std::to_string(got) + " values, expected " +
                                        std::to_string(d));
    }
    if (fs.labels.empty()) throw std::invalid_argument("features: '" + path + "' has no rows");
    fs.features = Tensor({fs.labels.size(), d});
    std::copy(buf.begin(), buf.end(), fs.features.data());
    return fs;
}

void save_report_csv(const KnnReport& report, const std::string& path) {
    std::ostringstream out;
    out << std::setprecision(17);
    out << "dataset,scale_pct,k,accuracy,n_train,n_val,checkpoint\n";
    for (const KnnRow& r : report.rows)
        out << r.dataset << ',' << r.scale_pct << ',' << r.k << ',' << r.accuracy << ','
            << r.n_train << ',' << r.n_val << ',' << report.checkpoint << "\n";
    std::ofstream f(path, std::ios::binary);
    if (!f) throw std::runtime_error("report: cannot write '" + path + "'");
    f << out.str();
}

} // namespace msmae
