#include "msmae/optim.hpp"

#include <cmath>
#include <stdexcept>

namespace msmae {

void OptimConfig::validate() const {
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate))
        throw std::invalid_argument("optim config: bad learning rate");
    if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
        throw std::invalid_argument("optim config: betas must lie in [0, 1)");
    if (!(eps > 0.0)) throw std::invalid_argument("optim config: eps must be positive");
    if (!(weight_decay >= 0.0) || !std::isfinite(weight_decay))
        throw std::invalid_argument("optim config: bad weight decay");
    if (total_steps == 0) throw std::invalid_argument("optim config: zero total steps");
}

double lr_at(const OptimConfig& cfg, std::size_t step) {
    if (step >= cfg.total_steps) return 0.0;
    if (cfg.warmup_steps > 0 && step < cfg.warmup_steps)
        return cfg.learning_rate * double(step + 1) / double(cfg.warmup_steps);
    if (cfg.total_steps <= cfg.warmup_steps) return cfg.learning_rate;
    double x = double(step - cfg.warmup_steps) / double(cfg.total_steps - cfg.warmup_steps);
    return cfg.learning_rate * 0.5 * (1.0 + std::cos(M_PI * x));
}

AdamW::AdamW(ParamStore& s, const OptimConfig& c) : store(&s), cfg(c) {
    cfg.validate();
    for (auto& [name, p] : s.entries()) {
        m.emplace(name, Tensor(p.value.shape()));
        v.emplace(name, Tensor(p.value.shape()));
    }
}

void AdamW::step() {
    if (!store) throw std::logic_error("optimizer has no parameter store");
    double lr = lr_at(cfg, t);
    ++t;
    double bc1 = 1.0 - std::pow(cfg.beta1, double(t));
    double bc2 = 1.0 - std::pow(cfg.beta2, double(t));
    for (auto& [name, p] : store->entries()) {
        Tensor& mm = m.at(name);
        Tensor& vv = v.at(name);
        bool decayed = p.value.ndim() >= 2;
        for (std::size_t i = 0; i < p.value.numel(); ++i) {
            double g = p.grad[i];
            mm[i] = cfg.beta1 * mm[i] + (1.0 - cfg.beta1) * g;
            vv[i] = cfg.beta2 * vv[i] + (1.0 - cfg.beta2) * g * g;
            double update = (mm[i] / bc1) / (std::sqrt(vv[i] / bc2) + cfg.eps);
            if (decayed) update += cfg.weight_decay * p.value[i];
            p.value[i] -= lr * update;
        }
    }
}

} // namespace msmae
