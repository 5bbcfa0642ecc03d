#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <vector>

#include "dadet/common.hpp"

namespace dadet {

// Dense row-major tensor. Feature maps use {C, H, W}, matrices {rows, cols}.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(count(shape)), T(0));
    }

    static long count(const std::vector<int>& s) {
        long n = 1;
        for (int d : s) n *= d;
        return n;
    }
    long size() const { return static_cast<long>(data.size()); }
    bool empty() const { return data.empty(); }

    int dim(int i) const { return shape[static_cast<size_t>(i)]; }

    // CHW access
    T& at(int c, int h, int w) { return data[(static_cast<size_t>(c) * shape[1] + h) * shape[2] + w]; }
    T at(int c, int h, int w) const { return data[(static_cast<size_t>(c) * shape[1] + h) * shape[2] + w]; }
    // matrix access
    T& at(int r, int c) { return data[static_cast<size_t>(r) * shape[1] + c]; }
    T at(int r, int c) const { return data[static_cast<size_t>(r) * shape[1] + c]; }

    T& operator[](size_t i) { return data[i]; }
    T operator[](size_t i) const { return data[i]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool all_finite() const {
        for (T v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    template <typename U>
    Tensor<U> cast() const {
        Tensor<U> out(shape);
        for (size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

}  // namespace dadet
