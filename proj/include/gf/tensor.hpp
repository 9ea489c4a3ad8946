#pragma once

#include <cassert>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace gf {

// Dense row-major tensor. Always contiguous; reshape is metadata-only.
template <class T>
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int64_t> shape) : shape_(std::move(shape)) {
        data_.assign(static_cast<size_t>(numel_of(shape_)), T(0));
    }

    Tensor(std::initializer_list<int64_t> shape)
        : Tensor(std::vector<int64_t>(shape)) {}

    static int64_t numel_of(const std::vector<int64_t>& s) {
        int64_t n = 1;
        for (int64_t d : s) {
            if (d < 0) throw std::invalid_argument("negative tensor dim");
            n *= d;
        }
        return n;
    }

    int64_t numel() const { return static_cast<int64_t>(data_.size()); }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int64_t dim(int i) const { return shape_.at(static_cast<size_t>(i)); }
    const std::vector<int64_t>& shape() const { return shape_; }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](int64_t i) { return data_[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data_[static_cast<size_t>(i)]; }

    T& at(int64_t i, int64_t j) {
        assert(ndim() == 2);
        return data_[static_cast<size_t>(i * shape_[1] + j)];
    }
    const T& at(int64_t i, int64_t j) const {
        assert(ndim() == 2);
        return data_[static_cast<size_t>(i * shape_[1] + j)];
    }
    T& at(int64_t i, int64_t j, int64_t k) {
        assert(ndim() == 3);
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    const T& at(int64_t i, int64_t j, int64_t k) const {
        assert(ndim() == 3);
        return data_[static_cast<size_t>((i * shape_[1] + j) * shape_[2] + k)];
    }
    T& at(int64_t i, int64_t j, int64_t k, int64_t l) {
        assert(ndim() == 4);
        return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }
    const T& at(int64_t i, int64_t j, int64_t k, int64_t l) const {
        assert(ndim() == 4);
        return data_[static_cast<size_t>(((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    void reshape(std::vector<int64_t> shape) {
        if (numel_of(shape) != numel())
            throw std::invalid_argument("reshape changes element count");
        shape_ = std::move(shape);
    }

    Tensor<T> reshaped(std::vector<int64_t> shape) const {
        Tensor<T> out = *this;
        out.reshape(std::move(shape));
        return out;
    }

    bool same_shape(const Tensor<T>& o) const { return shape_ == o.shape_; }

    std::string shape_str() const {
        std::string s = "(";
        for (size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape_[i]);
        }
        return s + ")";
    }

    bool operator==(const Tensor<T>& o) const {
        return shape_ == o.shape_ && data_ == o.data_;
    }

private:
    std::vector<int64_t> shape_;
    std::vector<T> data_;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;
using TensorU8 = Tensor<uint8_t>;

}  // namespace gf
