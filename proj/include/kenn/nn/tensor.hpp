#pragma once

#include <cassert>
#include <cmath>
#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <vector>

#include "kenn/error.hpp"

namespace kenn {

// Dense row-major tensor. float for training, double for gradient checks
// and anything feeding the exact-OT path.
template <class T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        assert(static_cast<int64_t>(data.size()) == numel_of(shape));
    }

    static int64_t numel_of(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) n *= d;
        return n;
    }

    static Tensor zeros(std::vector<int> s) {
        Tensor t;
        t.data.assign(static_cast<size_t>(numel_of(s)), T(0));
        t.shape = std::move(s);
        return t;
    }

    static Tensor full(std::vector<int> s, T v) {
        Tensor t;
        t.data.assign(static_cast<size_t>(numel_of(s)), v);
        t.shape = std::move(s);
        return t;
    }

    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    int64_t numel() const { return static_cast<int64_t>(data.size()); }
    int dim(int i) const { return shape[static_cast<size_t>(i)]; }
    int rank() const { return static_cast<int>(shape.size()); }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    template <class U>
    Tensor<U> cast() const {
        Tensor<U> out;
        out.shape = shape;
        out.data.assign(data.begin(), data.end());
        return out;
    }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }
};

}  // namespace kenn
