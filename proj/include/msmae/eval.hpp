#ifndef MSMAE_EVAL_HPP
#define MSMAE_EVAL_HPP

#include <stdexcept>
#include <string>
#include <vector>

#include "msmae/pipeline.hpp"

namespace msmae {

enum class FeaturePooling {
    MeanPatches, // mean over patch tokens, class token excluded (default)
    ClassToken,  // the class token row (encoder must have one)
};

// Frozen-encoder embeddings of one dataset at one evaluation scale.
struct FeatureSet {
    std::string dataset_name;
    double scale_pct = 100.0;
    Tensor features; // (n, d), unit rows
    std::vector<int> labels;
};

// Raised when downscaling would shrink an image below one patch; the
// sweep skips such scales instead of failing.
struct ScaleTooSmallError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Center-crop to square, resample to scale_pct of native size (tracking
// the gsd), resize to the encoder input, run the full unmasked forward,
// pool, and unit-normalize. The gsd handed to the positional encoding is
// the one the resampling chain implies.
FeatureSet extract_features(Model& model, const DatasetManifest& data, double scale_pct,
                            FeaturePooling pooling = FeaturePooling::MeanPatches);

// Fraction of validation rows whose k nearest train rows (cosine
// distance, ties broken by train index) vote their label; vote ties go
// to the lowest class id.
double knn_classify(const FeatureSet& train, const FeatureSet& val, std::size_t k);

struct KnnRow {
    std::string dataset;
    double scale_pct = 0.0;
    std::size_t k = 0;
    double accuracy = 0.0;
    std::size_t n_train = 0, n_val = 0;
};

struct KnnReport {
    std::vector<KnnRow> rows;
    std::string checkpoint; // id recorded in every CSV row
};

// Train features at native scale, validation features at each of
// {12.5, 25, 50, 100} percent, a row per (scale, k). Scales that would
// leave validation images below one patch are skipped with a warning on
// stderr.
KnnReport multiscale_eval(Model& model, const DatasetManifest& train,
                          const DatasetManifest& val, const std::vector<std::size_t>& ks,
                          FeaturePooling pooling, const std::string& checkpoint_id);

// Text round-trip: `# dataset=<name> scale_pct=<pct>`, a header, then
// one `label,f0,...` row per instance at full double precision.
void save_features(const FeatureSet& fs, const std::string& path);
FeatureSet load_features(const std::string& path);

// `dataset,scale_pct,k,accuracy,n_train,n_val,checkpoint` long-format table.
void save_report_csv(const KnnReport& report, const std::string& path);

} // namespace msmae

#endif
