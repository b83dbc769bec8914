// Copyright (c) 2026 loralab contributors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "loralab/rng.hpp"

namespace loralab {

// Dense row-major tensor of 64-bit floats. Rank 1 and 2 are what the model
// needs; anything else is rejected at construction.
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<double> d) : shape(std::move(s)), data(std::move(d)) {
        if (numel_of(shape) != data.size()) throw std::invalid_argument("Tensor: data length does not match shape");
    }

    static size_t numel_of(const std::vector<int>& s) {
        size_t n = 1;
        for (int e : s) {
            if (e <= 0) throw std::invalid_argument("Tensor: extents must be positive");
            n *= static_cast<size_t>(e);
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        const size_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(n, 0.0));
    }

    static Tensor full(std::vector<int> s, double v) {
        const size_t n = numel_of(s);
        return Tensor(std::move(s), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    size_t numel() const { return data.size(); }
    bool is_scalar() const { return data.size() == 1; }

    int rows() const { return shape.size() == 2 ? shape[0] : 1; }
    int cols() const { return shape.size() == 2 ? shape[1] : (shape.empty() ? 1 : shape[0]); }

    double& at(int r, int c) { return data[static_cast<size_t>(r) * static_cast<size_t>(cols()) + static_cast<size_t>(c)]; }
    double at(int r, int c) const { return data[static_cast<size_t>(r) * static_cast<size_t>(cols()) + static_cast<size_t>(c)]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    void fill(double v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }
};

inline std::string shape_str(const std::vector<int>& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(s[i]);
    }
    return out + ")";
}

// Named parameter with gradient buffer and trainability flag.
struct ParamGroup {
    std::string name;
    Tensor value;
    Tensor grad;
    bool trainable = true;

    ParamGroup() = default;
    ParamGroup(std::string n, Tensor v, bool train = true)
        : name(std::move(n)), value(std::move(v)), grad(Tensor::zeros(value.shape)), trainable(train) {}

    void zero_grad() { grad.fill(0.0); }
    size_t numel() const { return value.numel(); }
};

inline Tensor random_uniform(std::vector<int> shape, double lo, double hi, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.uniform(lo, hi);
    return t;
}

inline Tensor random_normal(std::vector<int> shape, double mean, double stddev, Rng& rng) {
    Tensor t = Tensor::zeros(std::move(shape));
    for (double& v : t.data) v = rng.normal(mean, stddev);
    return t;
}

}  // namespace loralab
