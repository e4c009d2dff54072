#ifndef MSMAE_OPTIM_HPP
#define MSMAE_OPTIM_HPP

#include <cstdint>
#include <map>
#include <string>

#include "msmae/params.hpp"

namespace msmae {

struct OptimConfig {
    double learning_rate = 1.5e-4; // peak rate, reached after warmup
    double beta1 = 0.9;
    double beta2 = 0.95;
    double eps = 1e-8;
    double weight_decay = 0.05; // decoupled; applied to matrices only
    std::size_t warmup_steps = 10;
    std::size_t total_steps = 200;

    void validate() const;
};

// Learning rate as a pure function of the 0-based update index: linear
// ramp over the warmup, cosine decay to zero at total_steps, zero after.
double lr_at(const OptimConfig& cfg, std::size_t step);

// Adam with decoupled weight decay over every parameter in a store.
// Decay skips vectors (ndim < 2): biases, norm scales, and the learned
// tokens all stay unregularized, matching masked-autoencoder practice.
struct AdamW {
    ParamStore* store = nullptr;
    OptimConfig cfg;
    std::size_t t = 0; // completed updates
    std::map<std::string, Tensor> m, v;

    AdamW() = default;
    AdamW(ParamStore& s, const OptimConfig& c);

    // One update from the gradients currently in the store; the schedule
    // position is t, so the first call uses lr_at(cfg, 0).
    void step();
};

} // namespace msmae

#endif
