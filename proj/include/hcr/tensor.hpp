#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <string>
#include <vector>

#include "hcr/common.hpp"
#include "hcr/rng.hpp"

namespace hcr {

/// Dense rank-1..4 array of 32-bit floats, row-major. Images and feature
/// maps use (batch, channel, height, width).
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
        validate_shape();
        data_.assign(static_cast<std::size_t>(numel_), 0.0f);
    }

    Tensor(std::vector<int> shape, std::vector<float> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (static_cast<std::int64_t>(data_.size()) != numel_) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape product " + std::to_string(numel_));
        }
    }

    static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

    static Tensor full(std::vector<int> shape, float value) {
        Tensor t(std::move(shape));
        std::fill(t.data_.begin(), t.data_.end(), value);
        return t;
    }

    static Tensor uniform(std::vector<int> shape, float lo, float hi, Rng& rng) {
        Tensor t(std::move(shape));
        for (float& v : t.data_) v = rng.uniform(lo, hi);
        return t;
    }

    const std::vector<int>& shape() const { return shape_; }
    int ndim() const { return static_cast<int>(shape_.size()); }
    int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
    std::int64_t numel() const { return numel_; }

    float* data() { return data_.data(); }
    const float* data() const { return data_.data(); }
    std::vector<float>& vec() { return data_; }
    const std::vector<float>& vec() const { return data_; }

    float& operator[](std::int64_t i) { return data_[static_cast<std::size_t>(i)]; }
    float operator[](std::int64_t i) const { return data_[static_cast<std::size_t>(i)]; }

    float& at2(int r, int c) { return data_[idx2(r, c)]; }
    float at2(int r, int c) const { return data_[idx2(r, c)]; }

    float& at4(int n, int c, int h, int w) { return data_[idx4(n, c, h, w)]; }
    float at4(int n, int c, int h, int w) const { return data_[idx4(n, c, h, w)]; }

    std::size_t idx2(int r, int c) const {
        return static_cast<std::size_t>(r) * static_cast<std::size_t>(shape_[1]) +
               static_cast<std::size_t>(c);
    }

    std::size_t idx4(int n, int c, int h, int w) const {
        return ((static_cast<std::size_t>(n) * static_cast<std::size_t>(shape_[1]) +
                 static_cast<std::size_t>(c)) *
                    static_cast<std::size_t>(shape_[2]) +
                static_cast<std::size_t>(h)) *
                   static_cast<std::size_t>(shape_[3]) +
               static_cast<std::size_t>(w);
    }

    /// Same data viewed under a new shape with equal element count.
    Tensor reshaped(std::vector<int> new_shape) const {
        Tensor t;
        t.shape_ = std::move(new_shape);
        t.validate_shape();
        if (t.numel_ != numel_) {
            throw ShapeError("reshape from " + shape_str() + " changes element count");
        }
        t.data_ = data_;
        return t;
    }

    void fill(float v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    bool all_finite() const {
        for (float v : data_)
            if (!std::isfinite(v)) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "(";
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (i) s += ", ";
            s += std::to_string(shape_[i]);
        }
        return s + ")";
    }

private:
    void validate_shape() {
        if (shape_.empty() || shape_.size() > 4) {
            throw ShapeError("tensor rank must be 1..4, got " +
                             std::to_string(shape_.size()));
        }
        numel_ = 1;
        for (std::size_t i = 0; i < shape_.size(); ++i) {
            if (shape_[i] <= 0) {
                throw ShapeError("tensor axis " + std::to_string(i) +
                                 " must be positive, got " + std::to_string(shape_[i]));
            }
            numel_ *= shape_[i];
        }
    }

    std::vector<int> shape_;
    std::vector<float> data_;
    std::int64_t numel_ = 0;
};

/// Trainable tensor: value plus an accumulated gradient of the same shape.
struct Param {
    std::string name;
    Tensor value;
    Tensor grad;

    Param() = default;
    Param(std::string name_, Tensor value_)
        : name(std::move(name_)), value(std::move(value_)), grad(value.shape()) {}

    void zero_grad() { grad.fill(0.0f); }
    std::int64_t numel() const { return value.numel(); }
};

}  // namespace hcr
