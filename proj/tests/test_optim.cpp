#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "msmae/optim.hpp"
#include "msmae/rng.hpp"

using msmae::AdamW;
using msmae::OptimConfig;
using msmae::ParamStore;

TEST_CASE("schedule: linear warmup, cosine decay, zero at the end") {
    OptimConfig cfg;
    cfg.learning_rate = 2.0;
    cfg.warmup_steps = 4;
    cfg.total_steps = 20;
    CHECK(msmae::lr_at(cfg, 0) == 0.5);
    CHECK(msmae::lr_at(cfg, 1) == 1.0);
    CHECK(msmae::lr_at(cfg, 3) == 2.0);             // end of warmup hits the peak
    CHECK(msmae::lr_at(cfg, 4) == 2.0);             // cosine starts at 1
    CHECK(msmae::lr_at(cfg, 20) == 0.0);            // past the horizon
    CHECK(msmae::lr_at(cfg, 1000) == 0.0);
    double mid = msmae::lr_at(cfg, 12);             // halfway through decay
    CHECK(mid == doctest::Approx(1.0).epsilon(1e-12));
    for (std::size_t s = 4; s + 1 < 20; ++s)        // monotone decay
        CHECK(msmae::lr_at(cfg, s + 1) <= msmae::lr_at(cfg, s));

    OptimConfig flat = cfg;
    flat.warmup_steps = 20; // warmup fills the whole run
    CHECK(msmae::lr_at(flat, 19) == 2.0);
    CHECK(msmae::lr_at(flat, 20) == 0.0);
}

TEST_CASE("two hand-computed updates match the implementation") {
    ParamStore store(7);
    auto* p = store.add("w", {2, 2}, msmae::ParamInit::zeros());
    for (std::size_t i = 0; i < 4; ++i) p->value[i] = 1.0 + double(i);

    OptimConfig cfg;
    cfg.learning_rate = 0.1;
    cfg.warmup_steps = 1;
    cfg.total_steps = 1000;
    cfg.weight_decay = 0.04;
    AdamW opt(store, cfg);

    double x[4], m[4] = {0, 0, 0, 0}, v[4] = {0, 0, 0, 0};
    for (std::size_t i = 0; i < 4; ++i) x[i] = p->value[i];

    for (int stepno = 1; stepno <= 2; ++stepno) {
        for (std::size_t i = 0; i < 4; ++i) p->grad[i] = 0.5 * double(i) - 1.0;
        double lr = msmae::lr_at(cfg, std::size_t(stepno - 1));
        for (std::size_t i = 0; i < 4; ++i) {
            double g = 0.5 * double(i) - 1.0;
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * g;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * g * g;
            double mhat = m[i] / (1.0 - std::pow(cfg.beta1, double(stepno)));
            double vhat = v[i] / (1.0 - std::pow(cfg.beta2, double(stepno)));
            x[i] -= lr * (mhat / (std::sqrt(vhat) + cfg.eps) + cfg.weight_decay * x[i]);
        }
        opt.step();
        for (std::size_t i = 0; i < 4; ++i) CHECK(p->value[i] == x[i]);
    }
    CHECK(opt.t == 2);
}

TEST_CASE("descends a quadratic to its minimum") {
    ParamStore store(9);
    auto* p = store.add("x", {1}, msmae::ParamInit::zeros());
    p->value[0] = 10.0;
    OptimConfig cfg;
    cfg.learning_rate = 0.2;
    cfg.warmup_steps = 5;
    cfg.total_steps = 400;
    cfg.weight_decay = 0.0;
    AdamW opt(store, cfg);
    for (int i = 0; i < 400; ++i) {
        p->grad[0] = 2.0 * (p->value[0] - 3.0);
        opt.step();
    }
    CHECK(std::fabs(p->value[0] - 3.0) < 0.05);
}

TEST_CASE("weight decay touches matrices only, and zero lr changes nothing") {
    ParamStore store(11);
    auto* mat = store.add("mat", {2, 3}, msmae::ParamInit::zeros());
    auto* vec = store.add("vec", {3}, msmae::ParamInit::zeros());
    for (std::size_t i = 0; i < mat->value.numel(); ++i) mat->value[i] = 2.0;
    for (std::size_t i = 0; i < vec->value.numel(); ++i) vec->value[i] = 2.0;

    OptimConfig cfg;
    cfg.learning_rate = 0.5;
    cfg.warmup_steps = 0;
    cfg.total_steps = 10;
    cfg.weight_decay = 0.1;
    AdamW opt(store, cfg);
    store.zero_grads();
    opt.step(); // gradients all zero: only decay can move anything
    for (std::size_t i = 0; i < mat->value.numel(); ++i)
        CHECK(mat->value[i] == doctest::Approx(2.0 - 0.5 * 0.1 * 2.0).epsilon(1e-15));
    for (std::size_t i = 0; i < vec->value.numel(); ++i) CHECK(vec->value[i] == 2.0);

    OptimConfig frozen = cfg;
    frozen.learning_rate = 0.0;
    ParamStore store2(11);
    auto* q = store2.add("mat", {2, 3}, msmae::ParamInit::zeros());
    for (std::size_t i = 0; i < q->value.numel(); ++i) q->value[i] = 2.0;
    AdamW opt2(store2, frozen);
    for (std::size_t i = 0; i < q->grad.numel(); ++i) q->grad[i] = 5.0;
    opt2.step();
    for (std::size_t i = 0; i < q->value.numel(); ++i) CHECK(q->value[i] == 2.0);
}

TEST_CASE("config validation") {
    OptimConfig cfg;
    cfg.beta1 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = OptimConfig{};
    cfg.eps = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = OptimConfig{};
    cfg.weight_decay = -1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = OptimConfig{};
    cfg.total_steps = 0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}
