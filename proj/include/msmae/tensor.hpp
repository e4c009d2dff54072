#ifndef MSMAE_TENSOR_HPP
#define MSMAE_TENSOR_HPP

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace msmae {

// Dense row-major tensor of doubles, up to 4 dimensions. All model math in
// this project runs in double so that reproducibility and gradient checks
// are not fighting float rounding.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<std::size_t> shape)
        : shape_(std::move(shape)), data_(count(shape_), 0.0) {}

    Tensor(std::initializer_list<std::size_t> shape)
        : Tensor(std::vector<std::size_t>(shape)) {}

    static Tensor zeros(std::vector<std::size_t> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        Tensor t(std::move(shape));
        for (auto& x : t.data_) x = v;
        return t;
    }

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t ndim() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t numel() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    double& at(std::size_t i, std::size_t j, std::size_t k) {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }
    double at(std::size_t i, std::size_t j, std::size_t k) const {
        return data_[(i * shape_[1] + j) * shape_[2] + k];
    }

    double& at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }
    double at(std::size_t i, std::size_t j, std::size_t k, std::size_t l) const {
        return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
    }

    void fill(double v) {
        for (auto& x : data_) x = v;
    }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void require_shape(const std::vector<std::size_t>& s, const char* what) const {
        if (shape_ != s) throw std::invalid_argument(std::string("shape mismatch in ") + what);
    }

private:
    static std::size_t count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (auto d : s) n *= d;
        return s.empty() ? 0 : n;
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

// Feature maps are {side, side, channels} tensors; token matrices {n, dim}.
using FeatureMap = Tensor;

} // namespace msmae

#endif
