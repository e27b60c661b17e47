#pragma once

// Dense 4-D tensor, shape (batch, channels, height, width), row-major with
// width fastest. Plain value type: ops produce new tensors, gradients travel
// as separate tensors of the same shape.

#include <algorithm>
#include <cstdint>
#include <string>
#include <vector>

#include "fusesr/common.hpp"

namespace fusesr {

template <typename T>
struct TensorT {
    int64_t b = 0, c = 0, h = 0, w = 0;
    std::vector<T> data;

    TensorT() = default;
    TensorT(int64_t b_, int64_t c_, int64_t h_, int64_t w_)
        : b(b_), c(c_), h(h_), w(w_),
          data(checked_numel(b_, c_, h_, w_), T(0)) {}

    // Validates before the data vector is sized, so bad dims raise ShapeError
    // rather than an allocation failure.
    static size_t checked_numel(int64_t b, int64_t c, int64_t h, int64_t w) {
        if (b < 0 || c < 0 || h < 0 || w < 0)
            throw ShapeError("tensor: negative dimension");
        return static_cast<size_t>(b * c * h * w);
    }

    static TensorT zeros(int64_t b, int64_t c, int64_t h, int64_t w) {
        return TensorT(b, c, h, w);
    }
    static TensorT full(int64_t b, int64_t c, int64_t h, int64_t w, T v) {
        TensorT t(b, c, h, w);
        std::fill(t.data.begin(), t.data.end(), v);
        return t;
    }

    int64_t numel() const { return b * c * h * w; }
    bool same_shape(const TensorT& o) const {
        return b == o.b && c == o.c && h == o.h && w == o.w;
    }
    std::string shape_str() const {
        return "(" + std::to_string(b) + "," + std::to_string(c) + "," +
               std::to_string(h) + "," + std::to_string(w) + ")";
    }

    int64_t index(int64_t bi, int64_t ci, int64_t y, int64_t x) const {
        return ((bi * c + ci) * h + y) * w + x;
    }
    T& at(int64_t bi, int64_t ci, int64_t y, int64_t x) {
        return data[static_cast<size_t>(index(bi, ci, y, x))];
    }
    const T& at(int64_t bi, int64_t ci, int64_t y, int64_t x) const {
        return data[static_cast<size_t>(index(bi, ci, y, x))];
    }

    // Pointer to the start of one (batch, channel) plane.
    T* plane(int64_t bi, int64_t ci) {
        return data.data() + static_cast<size_t>((bi * c + ci) * h * w);
    }
    const T* plane(int64_t bi, int64_t ci) const {
        return data.data() + static_cast<size_t>((bi * c + ci) * h * w);
    }

    template <typename U>
    TensorT<U> cast() const {
        TensorT<U> out(b, c, h, w);
        for (size_t i = 0; i < data.size(); ++i)
            out.data[i] = static_cast<U>(data[i]);
        return out;
    }

    void fill_uniform(Rng& rng, T lo, T hi) {
        for (auto& v : data) v = static_cast<T>(rng.uniform(lo, hi));
    }
    void fill_normal(Rng& rng, T mean, T stddev) {
        for (auto& v : data)
            v = static_cast<T>(mean + stddev * static_cast<T>(rng.normal()));
    }
};

using Tensor = TensorT<float>;
using Tensor64 = TensorT<double>;

template <typename T>
inline void require_same_shape(const char* op, const TensorT<T>& a,
                               const TensorT<T>& b) {
    if (!a.same_shape(b))
        throw ShapeError(std::string(op) + ": shape mismatch " + a.shape_str() +
                         " vs " + b.shape_str());
}

}  // namespace fusesr
