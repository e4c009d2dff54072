#ifndef MSMAE_OBJECTIVE_HPP
#define MSMAE_OBJECTIVE_HPP

#include "msmae/imaging.hpp"
#include "msmae/patching.hpp"
#include "msmae/tensor.hpp"

namespace msmae {

enum class TargetMode { Dual, LowOnly, HighOnly, Combined };

// Weights and mode for the two-band reconstruction loss. All reductions
// are means, so magnitudes are comparable across resolutions and modes.
struct LossConfig {
    double low_weight = 1.0;
    double high_weight = 1.0;
    TargetMode target_mode = TargetMode::Dual;
    // Experimental: score the low band only on pixels of masked patches
    // (the call must then supply the mask plan). The high band always
    // covers all pixels; modes without a low term ignore the flag.
    bool masked_only_low = false;

    void validate() const; // weights finite, >= 0, not both zero
};

// Per-term breakdown as it goes to the training log. `low` and `high`
// carry their weights and total is their sum; Combined mode reports its
// single joint term in `total` and leaves the band terms zero.
struct LossTerms {
    double total = 0.0;
    double low = 0.0;
    double high = 0.0;
};

struct LossGrads {
    Tensor dlow;  // d total / d low_pred, shaped like low_pred
    Tensor dhigh; // d total / d high_pred, shaped like high_pred
};

// Dual:      low_weight * mean((low_pred - low)^2)
//          + high_weight * mean(|high_pred - high|)
// LowOnly /
// HighOnly:  the corresponding single term
// Combined:  mean squared error between enlarge(low_pred) + high_pred and
//            the same recombination of the targets, at the high-band size
// Predictions a mode does not read may be empty; shapes of the ones it
// does read must match their targets.
LossTerms reconstruction_loss(const Tensor& low_pred, const Tensor& high_pred,
                              const BandpassTargets& targets, const LossConfig& cfg,
                              const MaskPlan* low_mask = nullptr);

// Gradients of LossTerms::total. Tensors a mode does not read come back
// empty; the absolute-error subgradient uses sign(0) = 0.
LossGrads reconstruction_loss_grad(const Tensor& low_pred, const Tensor& high_pred,
                                   const BandpassTargets& targets, const LossConfig& cfg,
                                   const MaskPlan* low_mask = nullptr);

} // namespace msmae

#endif
