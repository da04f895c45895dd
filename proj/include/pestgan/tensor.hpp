#pragma once

#include <cstdint>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <vector>

namespace pestgan {

/// Dense row-major tensor. Rank-3 [C,H,W] for images/latents, rank-4 for
/// conv weights, rank-1/0 for biases and scalars.
template <typename T>
struct Tensor {
    std::vector<int> shape;
    std::vector<T> data;

    Tensor() = default;
    explicit Tensor(std::vector<int> s) : shape(std::move(s)) {
        data.assign(static_cast<size_t>(count(shape)), T(0));
    }
    Tensor(std::vector<int> s, std::vector<T> d) : shape(std::move(s)), data(std::move(d)) {
        if (static_cast<int64_t>(data.size()) != count(shape))
            throw std::invalid_argument("tensor: data size does not match shape");
    }

    static int64_t count(const std::vector<int>& s) {
        int64_t n = 1;
        for (int d : s) {
            if (d < 0) throw std::invalid_argument("tensor: negative dimension");
            n *= d;
        }
        return n;
    }

    static Tensor zeros(std::vector<int> s) { return Tensor(std::move(s)); }
    static Tensor full(std::vector<int> s, T v) {
        Tensor t(std::move(s));
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }
    static Tensor scalar(T v) { return Tensor({1}, {v}); }

    int64_t size() const { return static_cast<int64_t>(data.size()); }
    int dim(int i) const { return shape.at(static_cast<size_t>(i)); }
    int rank() const { return static_cast<int>(shape.size()); }

    T& operator[](int64_t i) { return data[static_cast<size_t>(i)]; }
    const T& operator[](int64_t i) const { return data[static_cast<size_t>(i)]; }

    // [C,H,W] access
    T& at3(int c, int h, int w) {
        return data[(static_cast<size_t>(c) * shape[1] + h) * shape[2] + w];
    }
    const T& at3(int c, int h, int w) const {
        return data[(static_cast<size_t>(c) * shape[1] + h) * shape[2] + w];
    }
    // [A,B,H,W] access
    T& at4(int a, int b, int h, int w) {
        return data[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + h) * shape[3] + w];
    }
    const T& at4(int a, int b, int h, int w) const {
        return data[((static_cast<size_t>(a) * shape[1] + b) * shape[2] + h) * shape[3] + w];
    }

    bool same_shape(const Tensor& o) const { return shape == o.shape; }

    bool all_finite() const {
        for (const T& v : data)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::string shape_str() const {
        std::string s = "[";
        for (size_t i = 0; i < shape.size(); ++i) {
            if (i) s += ",";
            s += std::to_string(shape[i]);
        }
        return s + "]";
    }
};

template <typename U, typename T>
Tensor<U> tensor_cast(const Tensor<T>& t) {
    Tensor<U> out;
    out.shape = t.shape;
    out.data.resize(t.data.size());
    for (size_t i = 0; i < t.data.size(); ++i) out.data[i] = static_cast<U>(t.data[i]);
    return out;
}

}  // namespace pestgan
