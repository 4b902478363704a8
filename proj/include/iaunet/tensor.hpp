#pragma once

#include <algorithm>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "iaunet/common.hpp"

namespace iaunet::nn {

// Dense row-major N-D array. Value semantics; the autodiff tape owns copies.
template <typename T>
class Tensor {
  public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        data_.assign(checked_numel(shape_), T(0));
    }

    Tensor(std::vector<int> shape, T fill) : shape_(std::move(shape)) {
        data_.assign(checked_numel(shape_), fill);
    }

    static Tensor from(std::vector<int> shape, std::vector<T> data) {
        Tensor t;
        t.shape_ = std::move(shape);
        if (static_cast<std::int64_t>(data.size()) != checked_numel(t.shape_)) {
            throw DimensionError("Tensor::from: data size " + std::to_string(data.size()) +
                                 " does not match shape " + shape_str(t.shape_));
        }
        t.data_ = std::move(data);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return static_cast<std::int64_t>(data_.size()); }
    bool empty() const { return data_.empty(); }

    T* data() { return data_.data(); }
    const T* data() const { return data_.data(); }

    T& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    const T& operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    // NCHW accessor.
    T& at4(int n, int c, int h, int w) {
        return data_[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w)];
    }
    const T& at4(int n, int c, int h, int w) const {
        return data_[static_cast<std::size_t>(((static_cast<std::int64_t>(n) * dim(1) + c) * dim(2) + h) * dim(3) + w)];
    }

    T& at2(int i, int j) { return data_[static_cast<std::size_t>(static_cast<std::int64_t>(i) * dim(1) + j)]; }
    const T& at2(int i, int j) const {
        return data_[static_cast<std::size_t>(static_cast<std::int64_t>(i) * dim(1) + j)];
    }

    void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (const T& v : data_) {
            if (!std::isfinite(static_cast<double>(v))) return false;
        }
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out;
        std::vector<U> d(data_.size());
        for (std::size_t i = 0; i < data_.size(); ++i) d[i] = static_cast<U>(data_[i]);
        return Tensor<U>::from(shape_, std::move(d));
    }

    static std::string shape_str(const std::vector<int>& s) {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < s.size(); ++i) {
            if (i) os << ",";
            os << s[i];
        }
        os << "]";
        return os.str();
    }

    std::string shape_str() const { return shape_str(shape_); }

  private:
    static std::int64_t checked_numel(const std::vector<int>& shape) {
        std::int64_t n = 1;
        for (int d : shape) {
            if (d <= 0) throw DimensionError("Tensor: non-positive dimension in shape " + shape_str(shape));
            n *= d;
        }
        return n;
    }

    std::vector<int> shape_;
    std::vector<T> data_;
};

template <typename T>
void require_shape(const Tensor<T>& t, const std::vector<int>& shape, const char* what) {
    if (t.shape() != shape) {
        throw DimensionError(std::string(what) + ": expected shape " + Tensor<T>::shape_str(shape) + ", got " +
                             t.shape_str());
    }
}

template <typename T>
void require_finite(const Tensor<T>& t, const char* op) {
    if (!t.all_finite()) {
        throw NumericError(std::string("non-finite values produced by ") + op);
    }
}

// Uniform fill in [lo, hi), row-major draw order.
template <typename T>
void fill_uniform(Tensor<T>& t, Rng& rng, double lo, double hi) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(rng.uniform(lo, hi));
}

template <typename T>
void fill_normal(Tensor<T>& t, Rng& rng, double mean = 0.0, double stddev = 1.0) {
    for (std::int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<T>(mean + stddev * rng.normal());
}

}  // namespace iaunet::nn
