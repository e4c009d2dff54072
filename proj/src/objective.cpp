#include "msmae/objective.hpp"

#include <cmath>
#include <stdexcept>

#include "msmae/kernels.hpp"

namespace msmae {

namespace {

void require_match(const Tensor& pred, const RasterImage& target, const char* what) {
    if (pred.ndim() != 3 || pred.dim(0) != target.height() || pred.dim(1) != target.width() ||
        pred.dim(2) != target.channels())
        throw std::invalid_argument(std::string(what) + ": prediction shape does not match target");
}

// Per-pixel membership of masked patches on the low-band raster.
struct LowMask {
    std::vector<bool> masked; // h * w
    std::size_t scored = 0;   // masked pixels * channels
};

LowMask low_mask_layout(const MaskPlan& plan, std::size_t h, std::size_t w, std::size_t c) {
    std::size_t n = plan.n_patches();
    std::size_t grid = std::size_t(std::lround(std::sqrt(double(n))));
    if (grid * grid != n)
        throw std::invalid_argument("masked low loss: plan is not a square grid");
    if (h != w || h % grid != 0)
        throw std::invalid_argument("masked low loss: low band is not a multiple of the grid");
    if (plan.masked_idx.empty())
        throw std::invalid_argument("masked low loss: the plan masks no patches");
    std::size_t pp = h / grid;
    LowMask m;
    m.masked.assign(h * w, false);
    for (std::size_t p : plan.masked_idx) {
        std::size_t py = p / grid, px = p % grid;
        for (std::size_t y = py * pp; y < (py + 1) * pp; ++y)
            for (std::size_t x = px * pp; x < (px + 1) * pp; ++x) m.masked[y * w + x] = true;
    }
    m.scored = plan.masked_idx.size() * pp * pp * c;
    return m;
}

double low_term(const Tensor& pred, const RasterImage& target, const LossConfig& cfg,
                const MaskPlan* plan, Tensor* grad) {
    require_match(pred, target, "low loss");
    const Tensor& t = target.pixels;
    std::size_t n = pred.numel();
    if (!cfg.masked_only_low) {
        double mse = kernels::det_block_sum(n, [&](std::size_t i) {
                         double d = pred[i] - t[i];
                         return d * d;
                     }) /
                     double(n);
        if (grad) {
            double s = cfg.low_weight * 2.0 / double(n);
            for (std::size_t i = 0; i < n; ++i) (*grad)[i] = s * (pred[i] - t[i]);
        }
        return cfg.low_weight * mse;
    }
    if (!plan)
        throw std::invalid_argument("masked low loss: no mask plan supplied");
    std::size_t w = pred.dim(1), c = pred.dim(2);
    LowMask m = low_mask_layout(*plan, pred.dim(0), w, c);
    double mse = kernels::det_block_sum(n, [&](std::size_t i) {
                     if (!m.masked[i / c]) return 0.0;
                     double d = pred[i] - t[i];
                     return d * d;
                 }) /
                 double(m.scored);
    if (grad) {
        double s = cfg.low_weight * 2.0 / double(m.scored);
        for (std::size_t i = 0; i < n; ++i)
            (*grad)[i] = m.masked[i / c] ? s * (pred[i] - t[i]) : 0.0;
    }
    return cfg.low_weight * mse;
}

double high_term(const Tensor& pred, const RasterImage& target, const LossConfig& cfg,
                 Tensor* grad) {
    require_match(pred, target, "high loss");
    const Tensor& t = target.pixels;
    std::size_t n = pred.numel();
    double mae =
        kernels::det_block_sum(n, [&](std::size_t i) { return std::fabs(pred[i] - t[i]); }) /
        double(n);
    if (grad) {
        double s = cfg.high_weight / double(n);
        for (std::size_t i = 0; i < n; ++i) {
            double d = pred[i] - t[i];
            (*grad)[i] = d > 0.0 ? s : d < 0.0 ? -s : 0.0;
        }
    }
    return cfg.high_weight * mae;
}

// Residual of the reassembled image against the same reassembly of the
// targets, at the high-band size.
Tensor combined_residual(const Tensor& low_pred, const Tensor& high_pred,
                         const BandpassTargets& targets) {
    require_match(low_pred, targets.low, "combined loss");
    require_match(high_pred, targets.high, "combined loss");
    std::size_t oh = high_pred.dim(0), ow = high_pred.dim(1);
    Tensor up_pred = enlarge_bicubic(low_pred, oh, ow);
    Tensor up_tgt = enlarge_bicubic(targets.low.pixels, oh, ow);
    Tensor r(high_pred.shape());
    for (std::size_t i = 0; i < r.numel(); ++i)
        r[i] = (up_pred[i] + high_pred[i]) - (up_tgt[i] + targets.high.pixels[i]);
    return r;
}

} // namespace

void LossConfig::validate() const {
    if (!(low_weight >= 0.0) || !(high_weight >= 0.0) || !std::isfinite(low_weight) ||
        !std::isfinite(high_weight))
        throw std::invalid_argument("loss config: weights must be finite and non-negative");
    if (low_weight == 0.0 && high_weight == 0.0)
        throw std::invalid_argument("loss config: at least one weight must be positive");
}

LossTerms reconstruction_loss(const Tensor& low_pred, const Tensor& high_pred,
                              const BandpassTargets& targets, const LossConfig& cfg,
                              const MaskPlan* low_mask) {
    cfg.validate();
    LossTerms out;
    switch (cfg.target_mode) {
    case TargetMode::Dual:
        out.low = low_term(low_pred, targets.low, cfg, low_mask, nullptr);
        out.high = high_term(high_pred, targets.high, cfg, nullptr);
        out.total = out.low + out.high;
        break;
    case TargetMode::LowOnly:
        out.low = low_term(low_pred, targets.low, cfg, low_mask, nullptr);
        out.total = out.low;
        break;
    case TargetMode::HighOnly:
        out.high = high_term(high_pred, targets.high, cfg, nullptr);
        out.total = out.high;
        break;
    case TargetMode::Combined: {
        Tensor r = combined_residual(low_pred, high_pred, targets);
        std::size_t n = r.numel();
        out.total =
            kernels::det_block_sum(n, [&](std::size_t i) { return r[i] * r[i]; }) / double(n);
        break;
    }
    }
    return out;
}

LossGrads reconstruction_loss_grad(const Tensor& low_pred, const Tensor& high_pred,
                                   const BandpassTargets& targets, const LossConfig& cfg,
                                   const MaskPlan* low_mask) {
    cfg.validate();
    LossGrads g;
    switch (cfg.target_mode) {
    case TargetMode::Dual:
        g.dlow = Tensor(low_pred.shape());
        g.dhigh = Tensor(high_pred.shape());
        (void)low_term(low_pred, targets.low, cfg, low_mask, &g.dlow);
        (void)high_term(high_pred, targets.high, cfg, &g.dhigh);
        break;
    case TargetMode::LowOnly:
        g.dlow = Tensor(low_pred.shape());
        (void)low_term(low_pred, targets.low, cfg, low_mask, &g.dlow);
        break;
    case TargetMode::HighOnly:
        g.dhigh = Tensor(high_pred.shape());
        (void)high_term(high_pred, targets.high, cfg, &g.dhigh);
        break;
    case TargetMode::Combined: {
        Tensor r = combined_residual(low_pred, high_pred, targets);
        std::size_t n = r.numel();
        double s = 2.0 / double(n);
        g.dhigh = Tensor(high_pred.shape());
        for (std::size_t i = 0; i < n; ++i) g.dhigh[i] = s * r[i];
        g.dlow = enlarge_bicubic_adjoint(g.dhigh, low_pred.dim(0), low_pred.dim(1));
        break;
    }
    }
    return g;
}

} // namespace msmae
