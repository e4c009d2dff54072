#ifndef MSMAE_PARAMS_HPP
#define MSMAE_PARAMS_HPP

#include <cmath>
#include <cstdint>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "msmae/rng.hpp"
#include "msmae/tensor.hpp"

namespace msmae {

struct Param {
    Tensor value;
    Tensor grad;
};

// How a parameter tensor is filled at creation.
struct ParamInit {
    enum class Kind { Zeros, Ones, XavierUniform, Normal };
    Kind kind = Kind::Zeros;
    double stddev = 0.0;
    std::size_t fan_in = 0, fan_out = 0;

    static ParamInit zeros() { return {}; }
    static ParamInit ones() { return {Kind::Ones, 0.0, 0, 0}; }
    static ParamInit xavier(std::size_t fan_in, std::size_t fan_out) {
        return {Kind::XavierUniform, 0.0, fan_in, fan_out};
    }
    static ParamInit normal(double stddev) { return {Kind::Normal, stddev, 0, 0}; }
};

// Layers request their parameters from a host at construction. The training
// host allocates and initializes; the counting host only records shapes, so
// models far too large to fit in memory can still be sized exactly.
class ParamHost {
public:
    virtual ~ParamHost() = default;
    // Returns nullptr from counting hosts; forward/backward must only run
    // on models built against a real store.
    virtual Param* add(const std::string& name, std::vector<std::size_t> shape,
                       const ParamInit& init) = 0;
};

class ParamStore : public ParamHost {
public:
    explicit ParamStore(std::uint64_t seed) : seed_(seed) {}

    // Each tensor draws from its own stream keyed by (seed, name), so
    // initialization is independent of registration order.
    Param* add(const std::string& name, std::vector<std::size_t> shape,
               const ParamInit& init) override {
        auto [it, inserted] = map_.try_emplace(name);
        if (!inserted) throw std::invalid_argument("duplicate parameter name: " + name);
        Param& p = it->second;
        p.value = Tensor(shape);
        p.grad = Tensor(std::move(shape));
        Rng rng(derive_key(seed_, name));
        switch (init.kind) {
        case ParamInit::Kind::Zeros:
            break;
        case ParamInit::Kind::Ones:
            p.value.fill(1.0);
            break;
        case ParamInit::Kind::XavierUniform: {
            double limit = std::sqrt(6.0 / double(init.fan_in + init.fan_out));
            for (std::size_t i = 0; i < p.value.numel(); ++i)
                p.value[i] = (rng.uniform() * 2.0 - 1.0) * limit;
            break;
        }
        case ParamInit::Kind::Normal:
            for (std::size_t i = 0; i < p.value.numel(); ++i)
                p.value[i] = rng.normal() * init.stddev;
            break;
        }
        return &p;
    }

    Param& at(const std::string& name) {
        auto it = map_.find(name);
        if (it == map_.end()) throw std::out_of_range("no parameter named " + name);
        return it->second;
    }
    const Param& at(const std::string& name) const {
        auto it = map_.find(name);
        if (it == map_.end()) throw std::out_of_range("no parameter named " + name);
        return it->second;
    }
    bool has(const std::string& name) const { return map_.count(name) != 0; }

    // std::map keeps entries in name order: every traversal (optimizer,
    // checkpoint, norms) is deterministic.
    std::map<std::string, Param>& entries() { return map_; }
    const std::map<std::string, Param>& entries() const { return map_; }

    void zero_grads() {
        for (auto& [name, p] : map_) p.grad.fill(0.0);
    }

    std::size_t total_params() const {
        std::size_t n = 0;
        for (auto& [name, p] : map_) n += p.value.numel();
        return n;
    }

    std::uint64_t seed() const { return seed_; }

private:
    std::uint64_t seed_;
    std::map<std::string, Param> map_;
};

// Shape-only host: add() records the element count and returns nullptr.
class ParamCounter : public ParamHost {
public:
    Param* add(const std::string& name, std::vector<std::size_t> shape,
               const ParamInit&) override {
        std::size_t n = 1;
        for (auto d : shape) n *= d;
        if (shape.empty()) n = 0;
        entries_.emplace_back(name, n);
        return nullptr;
    }

    std::size_t total() const {
        std::size_t n = 0;
        for (auto& [name, c] : entries_) n += c;
        return n;
    }

    std::size_t total_with_prefix(const std::string& prefix) const {
        std::size_t n = 0;
        for (auto& [name, c] : entries_)
            if (name.rfind(prefix, 0) == 0) n += c;
        return n;
    }

    const std::vector<std::pair<std::string, std::size_t>>& entries() const { return entries_; }

private:
    std::vector<std::pair<std::string, std::size_t>> entries_;
};

} // namespace msmae

#endif
