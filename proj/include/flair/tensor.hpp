// Copyright (c) 2026 The flair-lab Authors
// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstdint>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace flair {

/// Dense row-major matrix of 64-bit floats. Scalars are [1x1], row vectors
/// [1xn], column vectors [nx1].
struct Tensor {
    std::vector<int> shape;
    std::vector<double> data;

    Tensor() = default;

    Tensor(std::vector<int> shp, std::vector<double> values)
        : shape(std::move(shp)), data(std::move(values)) {
        std::size_t want = 1;
        for (int s : shape) {
            if (s <= 0) throw std::invalid_argument("Tensor: nonpositive dimension");
            want *= static_cast<std::size_t>(s);
        }
        if (want != data.size())
            throw std::invalid_argument("Tensor: data length " + std::to_string(data.size()) +
                                        " does not match shape " + shape_str_of(shape));
    }

    static Tensor zeros(int r, int c) {
        return Tensor({r, c}, std::vector<double>(static_cast<std::size_t>(r) * c, 0.0));
    }
    static Tensor full(int r, int c, double v) {
        return Tensor({r, c}, std::vector<double>(static_cast<std::size_t>(r) * c, v));
    }
    static Tensor row(std::vector<double> v) {
        const int n = static_cast<int>(v.size());
        return Tensor({1, n}, std::move(v));
    }
    static Tensor column(std::vector<double> v) {
        const int n = static_cast<int>(v.size());
        return Tensor({n, 1}, std::move(v));
    }
    static Tensor scalar(double v) { return Tensor({1, 1}, {v}); }

    int rows() const { return shape.empty() ? 0 : shape[0]; }
    int cols() const { return shape.size() < 2 ? (shape.empty() ? 0 : 1) : shape[1]; }
    std::size_t size() const { return data.size(); }

    double& at(int r, int c) { return data[static_cast<std::size_t>(r) * cols() + c]; }
    double at(int r, int c) const { return data[static_cast<std::size_t>(r) * cols() + c]; }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (double v : data)
            if (!std::isfinite(v)) return false;
        return true;
    }

    static std::string shape_str_of(const std::vector<int>& s) {
        std::ostringstream os;
        os << "[";
        for (std::size_t i = 0; i < s.size(); ++i) os << (i ? "x" : "") << s[i];
        os << "]";
        return os.str();
    }
    std::string shape_str() const { return shape_str_of(shape); }
};

inline bool operator==(const Tensor& a, const Tensor& b) {
    return a.shape == b.shape && a.data == b.data;
}

}  // namespace flair
