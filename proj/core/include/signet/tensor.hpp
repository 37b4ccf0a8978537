#pragma once

#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "signet/errors.hpp"

namespace signet {

// Dense n-dimensional array, row-major. float for everything that trains or
// ships in files; the double instantiation exists for finite-difference
// checks in the test suites.
template <typename T>
struct TensorT {
    std::vector<std::size_t> shape;
    std::vector<T> data;

    TensorT() = default;

    explicit TensorT(std::vector<std::size_t> s) : shape(std::move(s)) {
        data.assign(element_count(shape), T(0));
    }

    TensorT(std::vector<std::size_t> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (data.size() != element_count(shape))
            throw ShapeError("data length " + std::to_string(data.size()) + " does not match shape (" +
                             shape_string() + ")");
    }

    static std::size_t element_count(const std::vector<std::size_t>& s) {
        std::size_t n = 1;
        for (std::size_t d : s) n *= d;
        return n;
    }

    std::size_t size() const { return data.size(); }
    std::size_t rank() const { return shape.size(); }
    std::size_t dim(std::size_t i) const { return shape.at(i); }

    T* ptr() { return data.data(); }
    const T* ptr() const { return data.data(); }

    T& operator[](std::size_t i) { return data[i]; }
    const T& operator[](std::size_t i) const { return data[i]; }

    // 4-d (n,c,h,w) access used by the image-shaped layers.
    T& at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }
    T at4(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const {
        return data[((n * shape[1] + c) * shape[2] + h) * shape[3] + w];
    }

    T& at2(std::size_t r, std::size_t c) { return data[r * shape[1] + c]; }
    T at2(std::size_t r, std::size_t c) const { return data[r * shape[1] + c]; }

    void fill(T v) { std::fill(data.begin(), data.end(), v); }

    bool same_shape(const TensorT& other) const { return shape == other.shape; }

    std::string shape_string() const {
        std::string s;
        for (std::size_t i = 0; i < shape.size(); ++i) {
            if (i) s += "x";
            s += std::to_string(shape[i]);
        }
        return s;
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(shape);
        for (std::size_t i = 0; i < data.size(); ++i) out.data[i] = static_cast<U>(data[i]);
        return out;
    }
};

using Tensor = TensorT<float>;

// Sum in double regardless of element type; reductions accumulate in 64-bit.
template <typename T>
double tensor_sum(const TensorT<T>& t) {
    double acc = 0.0;
    for (T v : t.data) acc += static_cast<double>(v);
    return acc;
}

template <typename T>
bool tensor_all_finite(const TensorT<T>& t) {
    for (T v : t.data)
        if (!std::isfinite(static_cast<double>(v))) return false;
    return true;
}

}  // namespace signet
